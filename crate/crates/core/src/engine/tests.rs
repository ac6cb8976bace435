use super::*;
use crate::hexgrid::SPECIAL;
use crate::scenarios::ScenarioDocument;

fn engine(id: u8) -> EngineState {
    EngineState::reset(Arc::new(ScenarioConfig::bundled(id).unwrap()), 42).unwrap()
}

fn with_config(cfg: ScenarioConfig) -> EngineState {
    EngineState::reset(Arc::new(cfg), 42).unwrap()
}

fn place(st: &mut EngineState, uid: Uid, row: i32, col: i32) {
    st.operator_mut(uid).unwrap().pos = HexCoord::new(row, col);
}

/// Everyone holds; mid-move operators submit Empty.
fn hold_all(st: &EngineState) -> ActionMap {
    (0..ROSTER_SIZE)
        .filter(|&u| st.operators()[u].alive)
        .map(|u| {
            let a = if st.available_actions(u).unwrap().is_empty_only() {
                Action::Empty
            } else {
                Action::Stop
            };
            (u, a)
        })
        .collect()
}

#[test]
fn reset_is_deterministic() {
    assert_eq!(engine(0).digest(), engine(0).digest());
    let other = EngineState::reset(Arc::new(ScenarioConfig::bundled(0).unwrap()), 43).unwrap();
    assert_ne!(engine(0).digest(), other.digest());
}

#[test]
fn reset_scenario_two_roster() {
    let st = engine(2);
    let bloods: Vec<f64> = st.operators().iter().map(|o| o.blood.as_f64()).collect();
    assert_eq!(bloods, vec![10.0, 8.0, 7.0, 10.0, 8.0, 7.0]);
    assert!(st.operators().iter().all(|o| o.alive && o.move_time == 0 && o.stop_time == 0));
    assert_eq!(st.tick(), 0);
}

#[test]
fn reset_rejects_out_of_bounds_init() {
    let mut doc = ScenarioDocument::bundled(0).unwrap();
    doc.init_hex.red[0] = HexCoord::new(0, 23);
    assert!(ScenarioConfig::from_document(doc, None).is_err());
}

#[test]
fn infantry_mid_move_has_only_empty() {
    let mut st = engine(0);
    let mut acts = hold_all(&st);
    acts.insert(2, Action::Move(Direction::SE));
    st.step(&acts).unwrap();
    st.step(&hold_all(&st)).unwrap();
    assert_eq!(st.operators()[2].move_ticks_remaining, 3);
    assert!(st.available_actions(2).unwrap().is_empty_only());
}

#[test]
fn tank_out_of_range_can_move_not_shoot() {
    let mut st = engine(0);
    place(&mut st, 0, 6, 2);
    place(&mut st, 3, 6, 11);
    assert_eq!(hex_distance(HexCoord::new(6, 2), HexCoord::new(6, 11)), 9);
    let m = st.available_actions(0).unwrap();
    assert!(!m.get(SHOOT_BASE));
    assert!(m.get(MOVE_BASE + Direction::E.index()));
    place(&mut st, 3, 6, 9);
    assert!(st.available_actions(0).unwrap().get(SHOOT_BASE));
}

#[test]
fn guide_shoot_disabled_in_scenario_zero() {
    let mut st = engine(0);
    place(&mut st, 1, 6, 8);
    place(&mut st, 4, 6, 11);
    for o in st.operators.iter_mut() {
        o.stop_time = 5;
    }
    let m = st.available_actions(1).unwrap();
    assert!(m.get(SHOOT_BASE));
    assert!((0..3).all(|k| !m.get(GUIDE_BASE + k)));
}

fn hidden_tank_pose() -> EngineState {
    let mut cfg_map = GameMap::new(13, 23);
    cfg_map.set_terrain(HexCoord::new(6, 15), SPECIAL).unwrap();
    let mut doc = ScenarioDocument::bundled(1).unwrap();
    doc.map = crate::scenarios::MapSource::Inline(String::from_utf8(crate::hexgrid::save_map(&cfg_map)).unwrap());
    let mut st = with_config(ScenarioConfig::from_document(doc, None).unwrap());
    place(&mut st, 0, 6, 6);
    place(&mut st, 3, 6, 15);
    st
}

use crate::hexgrid::GameMap;

#[test]
fn hidden_tank_sees_without_being_seen() {
    let st = hidden_tank_pose();
    assert_eq!(hex_distance(st.operators()[0].pos, st.operators()[3].pos), 9);
    assert!(st.visibility(3, 0).unwrap());
    assert!(!st.visibility(0, 3).unwrap());
}

#[test]
fn visibility_at_zero_distance_and_allies() {
    let st = engine(0);
    assert!(st.visibility(0, 1).unwrap());
    assert!(st.visibility(0, 0).unwrap());
    assert!(st.visibility(9, 0).is_err());
}

#[test]
fn infantry_on_special_terrain_visibility_by_distance() {
    // Oracle: radius 5 halved to 2.5, so visible iff d <= 2.5.
    let mut map = GameMap::new(13, 23);
    map.set_terrain(HexCoord::new(6, 10), SPECIAL).unwrap();
    let mut doc = ScenarioDocument::bundled(1).unwrap();
    doc.map = crate::scenarios::MapSource::Inline(String::from_utf8(crate::hexgrid::save_map(&map)).unwrap());
    let mut st = with_config(ScenarioConfig::from_document(doc, None).unwrap());
    place(&mut st, 5, 6, 10);
    for d in 0..=6 {
        place(&mut st, 0, 6, 10 - d);
        let expected = (d as f64) <= 5.0 / 2.0;
        assert_eq!(st.visibility(0, 5).unwrap(), expected, "distance {d}");
    }
    place(&mut st, 0, 6, 7);
    assert!(!st.visibility(0, 5).unwrap());
}

#[test]
fn dead_operators_are_invisible() {
    let mut st = engine(0);
    st.operator_mut(3).unwrap().alive = false;
    place(&mut st, 3, 1, 11);
    assert!(!st.visibility(0, 3).unwrap());
    assert!(!st.visibility(3, 0).unwrap());
}

#[test]
fn attack_range_is_target_centric() {
    let mut st = engine(0);
    place(&mut st, 0, 6, 5);
    place(&mut st, 5, 6, 8);
    assert!(st.can_attack(0, 5).unwrap());
    place(&mut st, 5, 6, 9);
    assert!(!st.can_attack(0, 5).unwrap());
    // infantry 2 -> blue tank 3 at distance 7
    place(&mut st, 2, 4, 2);
    place(&mut st, 3, 4, 9);
    assert!(st.can_attack(2, 3).unwrap());
    assert!(matches!(st.can_attack(0, 1), Err(EngineError::SameTeam(0, 1))));
}

#[test]
fn attack_range_shooter_centric_switch() {
    let cfg = ScenarioConfig::bundled(0)
        .unwrap()
        .apply_override("range_semantics", serde_json::json!("shooter"))
        .unwrap();
    let mut st = with_config(cfg);
    place(&mut st, 2, 4, 2);
    place(&mut st, 3, 4, 9);
    assert!(!st.can_attack(2, 3).unwrap());
    place(&mut st, 3, 4, 5);
    assert!(st.can_attack(2, 3).unwrap());
    place(&mut st, 0, 6, 5);
    place(&mut st, 5, 6, 12);
    assert!(st.can_attack(0, 5).unwrap());
}

#[test]
fn any_pair_at_distance_zero_can_attack() {
    let mut st = engine(0);
    place(&mut st, 5, 6, 6);
    place(&mut st, 0, 6, 6);
    assert!(st.can_attack(0, 5).unwrap());
}

#[test]
fn infantry_move_takes_five_ticks() {
    let mut st = engine(0);
    let start = st.operators()[2].pos;
    let mut acts = hold_all(&st);
    acts.insert(2, Action::Move(Direction::SE));
    st.step(&acts).unwrap();
    for t in 1..5 {
        assert_eq!(st.tick(), t);
        assert_eq!(st.operators()[2].pos, start);
        st.step(&hold_all(&st)).unwrap();
    }
    assert_eq!(st.tick(), 5);
    assert_eq!(st.operators()[2].pos, start.step(Direction::SE));
    assert_eq!(st.operators()[2].stop_time, 0);
    assert!(!st.available_actions(2).unwrap().is_empty_only());
}

#[test]
fn quiet_ticks_have_zero_reward() {
    let mut st = engine(0);
    for _ in 0..10 {
        let r = st.step(&hold_all(&st)).unwrap();
        assert_eq!((r.reward_red, r.reward_blue), (0.0, 0.0));
        assert!(r.events.is_empty());
    }
}

#[test]
fn cap_compares_team_blood() {
    let mut st = engine(0);
    for (uid, b) in [(0, 60), (1, 40), (2, 34), (3, 50), (4, 30), (5, 30)] {
        st.operator_mut(uid).unwrap().blood = Hp::from_tenths(b);
    }
    assert_eq!(st.team_blood(Color::Red).as_f64(), 13.4);
    assert_eq!(st.team_blood(Color::Blue).as_f64(), 11.0);
    let mut last = None;
    while !st.terminated() {
        last = Some(st.step(&hold_all(&st)).unwrap());
    }
    let last = last.unwrap();
    assert_eq!(st.tick(), 600);
    assert_eq!(st.winner(), Winner::Red);
    assert_eq!(last.events, vec![Event::EpisodeEnd { winner: Winner::Red }]);
    assert!(matches!(st.step(&ActionMap::new()), Err(EngineError::Terminated)));
}

#[test]
fn equal_blood_at_cap_is_draw() {
    let cfg = ScenarioConfig::bundled(0)
        .unwrap()
        .apply_override("max_ticks", serde_json::json!(3))
        .unwrap();
    let mut st = with_config(cfg);
    while !st.terminated() {
        st.step(&hold_all(&st)).unwrap();
    }
    assert_eq!((st.tick(), st.winner()), (3, Winner::Draw));
}

#[test]
fn zero_tick_episode_is_terminated_at_reset() {
    let cfg = ScenarioConfig::bundled(0)
        .unwrap()
        .apply_override("max_ticks", serde_json::json!(0))
        .unwrap();
    let st = with_config(cfg);
    assert!(st.terminated());
    assert_eq!(st.winner(), Winner::Draw);
    assert!(st.available_actions(0).unwrap().is_empty_only());
}

#[test]
fn tank_hits_chariot_with_low_roll() {
    let mut st = engine(0);
    let ev = st.resolve_shot_with_roll(0, 4, false, 0.5);
    assert_eq!(st.operators()[4].blood.as_f64(), 6.8);
    assert_eq!(
        ev,
        vec![Event::Shot {
            shooter: 0,
            target: 4,
            hit: true,
            damage: Hp::from_tenths(12)
        }]
    );
    assert_eq!(st.operators()[0].shoot_cooling_time, 1);
}

#[test]
fn high_roll_misses_but_cools_down() {
    let mut st = engine(0);
    let ev = st.resolve_shot_with_roll(0, 4, false, 0.95);
    assert_eq!(st.operators()[4].blood.as_f64(), 8.0);
    assert!(matches!(ev[0], Event::Shot { hit: false, .. }));
    assert_eq!(st.operators()[0].shoot_cooling_time, 1);
}

#[test]
fn seven_chariot_hits_kill_a_tank() {
    // Ledger: 10.0 - k * 1.5, floored at 0.
    let mut st = engine(0);
    for k in 1..=7u32 {
        let ev = st.resolve_shot_with_roll(1, 3, false, 0.0);
        let expected = 100u32.saturating_sub(15 * k);
        assert_eq!(st.operators()[3].blood.tenths(), expected);
        assert_eq!(ev.len(), if k == 7 { 2 } else { 1 });
    }
    assert!(!st.operators()[3].alive);
    // last hit only removes what is left: 1.0
    assert_eq!(st.team_blood(Color::Blue).as_f64(), 15.0);
}

#[test]
fn illegal_action_leaves_state_unchanged() {
    let mut st = engine(0);
    let before = st.digest();
    let mut acts = hold_all(&st);
    acts.insert(0, Action::Shoot(3));
    let err = st.step(&acts).unwrap_err();
    assert!(matches!(err, EngineError::IllegalAction { uid: 0, .. }));
    assert_eq!(st.digest(), before);

    let mut acts = hold_all(&st);
    acts.remove(&4);
    assert!(matches!(st.step(&acts), Err(EngineError::MissingAction { uid: 4, .. })));
    let mut acts = hold_all(&st);
    acts.insert(0, Action::Empty);
    assert!(st.step(&acts).is_err());
    let mut acts = hold_all(&st);
    acts.insert(7, Action::Stop);
    assert!(matches!(st.step(&acts), Err(EngineError::UnknownUid(7))));
    assert_eq!(st.digest(), before);
}

#[test]
fn contested_landing_voids_both_moves() {
    let mut st = engine(0);
    place(&mut st, 0, 6, 5);
    place(&mut st, 3, 6, 7);
    let mut acts = hold_all(&st);
    acts.insert(0, Action::Move(Direction::E));
    acts.insert(3, Action::Move(Direction::W));
    let r = st.step(&acts).unwrap();
    assert_eq!(st.operators()[0].pos, HexCoord::new(6, 5));
    assert_eq!(st.operators()[3].pos, HexCoord::new(6, 7));
    let voided = r
        .events
        .iter()
        .filter(|e| matches!(e, Event::MoveCompleted { voided: true, .. }))
        .count();
    assert_eq!(voided, 2);
}

#[test]
fn landing_on_an_operator_that_arrived_is_voided() {
    let mut st = engine(0);
    // infantry starts a move toward (1, 12); the tank then parks there first.
    let mut acts = hold_all(&st);
    acts.insert(2, Action::Move(Direction::SE));
    st.step(&acts).unwrap();
    let target = HexCoord::new(0, 12).step(Direction::SE);
    let mut acts = hold_all(&st);
    acts.insert(0, Action::Move(Direction::SE));
    st.step(&acts).unwrap();
    let mut acts = hold_all(&st);
    acts.insert(0, Action::Move(Direction::E));
    st.step(&acts).unwrap();
    assert_eq!(st.operators()[0].pos, target);
    while st.operators()[2].is_moving() {
        st.step(&hold_all(&st)).unwrap();
    }
    assert_eq!(st.operators()[2].pos, HexCoord::new(0, 12));
}

#[test]
fn chariot_needs_prep_time_tank_does_not() {
    let mut st = engine(0);
    place(&mut st, 0, 6, 5);
    place(&mut st, 1, 6, 6);
    place(&mut st, 3, 6, 10);
    assert!(st.available_actions(0).unwrap().get(SHOOT_BASE));
    assert!(!st.available_actions(1).unwrap().get(SHOOT_BASE));
    st.step(&hold_all(&st)).unwrap();
    assert!(!st.available_actions(1).unwrap().get(SHOOT_BASE));
    st.step(&hold_all(&st)).unwrap();
    assert_eq!(st.operators()[1].stop_time, 2);
    assert!(st.available_actions(1).unwrap().get(SHOOT_BASE));
}

#[test]
fn guide_shoot_uses_ally_vision() {
    let mut map = GameMap::new(17, 27);
    map.set_terrain(HexCoord::new(8, 17), SPECIAL).unwrap();
    let mut doc = ScenarioDocument::bundled(2).unwrap();
    doc.map = crate::scenarios::MapSource::Inline(String::from_utf8(crate::hexgrid::save_map(&map)).unwrap());
    let mut st = with_config(ScenarioConfig::from_document(doc, None).unwrap());
    // Blue infantry hides on special terrain at (8,17): visible only within 2.
    place(&mut st, 5, 8, 17);
    place(&mut st, 1, 8, 14); // chariot, distance 3 (in range, cannot see)
    place(&mut st, 2, 8, 15); // spotter infantry, distance 2
    st.operator_mut(1).unwrap().stop_time = 2;
    assert!(!st.visibility(1, 5).unwrap());
    assert!(st.visibility(2, 5).unwrap());
    let m = st.available_actions(1).unwrap();
    assert!(m.get(GUIDE_BASE + 2));
    assert!(!m.get(SHOOT_BASE + 2));
}

#[test]
fn shots_commute_so_roster_order_does_not_matter() {
    let mut a = engine(0);
    let mut b = engine(0);
    a.resolve_shot_with_roll(0, 4, false, 0.0);
    a.resolve_shot_with_roll(2, 4, false, 0.0);
    b.resolve_shot_with_roll(2, 4, false, 0.0);
    b.resolve_shot_with_roll(0, 4, false, 0.0);
    assert_eq!(a.operators()[4].blood, b.operators()[4].blood);
    assert_eq!(a.operators()[4].blood.as_f64(), 6.0);
}
