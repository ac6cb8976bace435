//! Match configuration: the six bundled scenarios, the JSON config document,
//! and single-field overrides.

mod mapgen;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{OpType, OperatorSpec, TEAM_SIZE};
use crate::hexgrid::{load_map, save_map, GameMap, HexCoord, HexError};

pub use mapgen::generate_map;

pub const DOCUMENT_VERSION: u32 = 1;
pub const DEFAULT_MAX_TICKS: u32 = 600;
pub const BUNDLED_COUNT: u8 = 6;

/// `(rows, cols, special_terrain, guide_shoot)` per bundled scenario.
pub const BUNDLED_TABLE: [(i32, i32, bool, bool); 6] = [
    (13, 23, false, false),
    (13, 23, true, false),
    (17, 27, true, true),
    (27, 37, true, true),
    (27, 37, true, true),
    (67, 77, true, true),
];

const BUNDLED_MAP_TEXT: [&str; 6] = [
    include_str!("../../maps/scenario0.map"),
    include_str!("../../maps/scenario1.map"),
    include_str!("../../maps/scenario2.map"),
    include_str!("../../maps/scenario3.map"),
    include_str!("../../maps/scenario4.map"),
    include_str!("../../maps/scenario5.map"),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario id {0} (bundled ids are 0..=5)")]
    UnknownId(u32),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("`{0}` is not an overridable field")]
    UnknownOverride(String),
    #[error("map error: {0}")]
    Map(#[from] HexError),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeSemantics {
    /// Engagement range is the target's attacked distance.
    #[default]
    Target,
    /// Engagement range is the shooter's attacked distance.
    Shooter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Bundled(u8),
    /// Path to a map text file, relative to the document's directory.
    File(String),
    /// Map text embedded in the document.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Teams<T> {
    pub red: T,
    pub blue: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorTable {
    pub tank: OperatorSpec,
    pub chariot: OperatorSpec,
    pub infantry: OperatorSpec,
}

impl Default for OperatorTable {
    fn default() -> Self {
        Self {
            tank: OperatorSpec::tank(),
            chariot: OperatorSpec::chariot(),
            infantry: OperatorSpec::infantry(),
        }
    }
}

impl OperatorTable {
    pub fn get(&self, t: OpType) -> &OperatorSpec {
        match t {
            OpType::Tank => &self.tank,
            OpType::Chariot => &self.chariot,
            OpType::Infantry => &self.infantry,
        }
    }
}

fn default_max_ticks() -> u32 {
    DEFAULT_MAX_TICKS
}

fn default_roster() -> Teams<[OpType; TEAM_SIZE]> {
    let r = [OpType::Tank, OpType::Chariot, OpType::Infantry];
    Teams { red: r, blue: r }
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub version: u32,
    #[serde(default)]
    pub scenario_id: Option<u8>,
    pub map: MapSource,
    pub special_terrain: bool,
    pub guide_shoot: bool,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u32,
    #[serde(default)]
    pub range_semantics: RangeSemantics,
    /// Divide rewards by the larger initial team blood total.
    #[serde(default)]
    pub normalize_reward: bool,
    /// Swap the red and blue halves of each tick's damage-roll block.
    #[serde(default)]
    pub mirrored_rolls: bool,
    #[serde(default = "default_roster")]
    pub roster: Teams<[OpType; TEAM_SIZE]>,
    pub init_hex: Teams<[HexCoord; TEAM_SIZE]>,
    #[serde(default)]
    pub operators: OperatorTable,
}

impl ScenarioDocument {
    pub fn bundled(id: u8) -> Result<Self, ScenarioError> {
        let &(rows, cols, special, guide) = BUNDLED_TABLE
            .get(id as usize)
            .ok_or(ScenarioError::UnknownId(id as u32))?;
        let mid = cols / 2;
        let red = [
            HexCoord::new(0, mid),
            HexCoord::new(0, mid - 1),
            HexCoord::new(0, mid + 1),
        ];
        let blue = red.map(|c| HexCoord::new(rows - 1 - c.row, c.col));
        Ok(Self {
            version: DOCUMENT_VERSION,
            scenario_id: Some(id),
            map: MapSource::Bundled(id),
            special_terrain: special,
            guide_shoot: guide,
            max_ticks: DEFAULT_MAX_TICKS,
            range_semantics: RangeSemantics::Target,
            normalize_reward: false,
            mirrored_rolls: false,
            roster: default_roster(),
            init_hex: Teams { red, blue },
            operators: OperatorTable::default(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }
}

/// A validated scenario with its map resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    doc: ScenarioDocument,
    map: Arc<GameMap>,
}

fn bundled_map(id: u8) -> Result<Arc<GameMap>, ScenarioError> {
    static CACHE: [OnceLock<Arc<GameMap>>; 6] = [const { OnceLock::new() }; 6];
    let text = BUNDLED_MAP_TEXT
        .get(id as usize)
        .ok_or(ScenarioError::UnknownId(id as u32))?;
    Ok(CACHE[id as usize]
        .get_or_init(|| Arc::new(load_map(text.as_bytes()).expect("bundled map parses")))
        .clone())
}

/// Map text generated for bundled scenario `id`; the shipped map files are
/// exactly this output.
pub fn bundled_map_text(id: u8) -> Option<String> {
    let &(rows, cols, special, _) = BUNDLED_TABLE.get(id as usize)?;
    let map = generate_map(rows, cols, id as u64, special);
    Some(String::from_utf8(save_map(&map)).expect("ascii"))
}

impl ScenarioConfig {
    pub fn bundled(id: u8) -> Result<Self, ScenarioError> {
        Self::from_document(ScenarioDocument::bundled(id)?, None)
    }

    /// Resolves and validates a document. Relative map paths resolve
    /// against `base_dir` (or the working directory).
    pub fn from_document(doc: ScenarioDocument, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let map = match &doc.map {
            MapSource::Bundled(id) => bundled_map(*id)?,
            MapSource::Inline(text) => Arc::new(load_map(text.as_bytes())?),
            MapSource::File(p) => {
                let path = match base_dir {
                    Some(b) => b.join(p),
                    None => PathBuf::from(p),
                };
                let bytes = std::fs::read(&path).map_err(|source| ScenarioError::Io { path, source })?;
                Arc::new(load_map(&bytes)?)
            }
        };
        let cfg = Self { doc, map };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Self::from_document(ScenarioDocument::from_json(text)?, None)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_document(ScenarioDocument::from_json(&text)?, path.parent())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let d = &self.doc;
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if d.version != DOCUMENT_VERSION {
            return invalid(format!("unsupported document version {}", d.version));
        }
        if let Some(id) = d.scenario_id {
            if id >= BUNDLED_COUNT {
                return Err(ScenarioError::UnknownId(id as u32));
            }
        }
        if !d.special_terrain && self.map.has_special() {
            return invalid("special_terrain is false but the map has special cells".into());
        }
        for (key, t) in [
            ("tank", OpType::Tank),
            ("chariot", OpType::Chariot),
            ("infantry", OpType::Infantry),
        ] {
            let spec = d.operators.get(t);
            if spec.op_type != t {
                return invalid(format!("operators.{key} has op_type {}", spec.op_type));
            }
            spec.validate().map_err(ScenarioError::Invalid)?;
        }
        let all: Vec<(String, HexCoord)> = [("red", &d.init_hex.red), ("blue", &d.init_hex.blue)]
            .into_iter()
            .flat_map(|(team, cells)| {
                cells
                    .iter()
                    .enumerate()
                    .map(move |(i, &c)| (format!("init_hex.{team}.{i}"), c))
            })
            .collect();
        for (i, (name, c)) in all.iter().enumerate() {
            if !self.map.in_bounds(*c) {
                return invalid(format!(
                    "{name} = {c} is outside the {}x{} map",
                    self.map.rows(),
                    self.map.cols()
                ));
            }
            if let Some((other, _)) = all[..i].iter().find(|(_, o)| o == c) {
                return invalid(format!("{name} = {c} duplicates {other}"));
            }
        }
        Ok(())
    }

    pub fn document(&self) -> &ScenarioDocument {
        &self.doc
    }

    pub fn map(&self) -> &GameMap {
        &self.map
    }

    pub fn scenario_id(&self) -> Option<u8> {
        self.doc.scenario_id
    }

    pub fn special_terrain(&self) -> bool {
        self.doc.special_terrain
    }

    pub fn guide_shoot(&self) -> bool {
        self.doc.guide_shoot
    }

    pub fn max_ticks(&self) -> u32 {
        self.doc.max_ticks
    }

    pub fn range_semantics(&self) -> RangeSemantics {
        self.doc.range_semantics
    }

    pub fn normalize_reward(&self) -> bool {
        self.doc.normalize_reward
    }

    pub fn mirrored_rolls(&self) -> bool {
        self.doc.mirrored_rolls
    }

    pub fn spec(&self, t: OpType) -> &OperatorSpec {
        self.doc.operators.get(t)
    }

    /// Operator type of roster slot `uid`.
    pub fn roster_type(&self, uid: usize) -> OpType {
        if uid < TEAM_SIZE {
            self.doc.roster.red[uid]
        } else {
            self.doc.roster.blue[uid - TEAM_SIZE]
        }
    }

    pub fn init_hex(&self, uid: usize) -> HexCoord {
        if uid < TEAM_SIZE {
            self.doc.init_hex.red[uid]
        } else {
            self.doc.init_hex.blue[uid - TEAM_SIZE]
        }
    }

    pub fn to_json(&self) -> String {
        self.doc.to_json()
    }

    /// The color-swapped scenario: map row-flipped, teams exchanged (each
    /// side takes the other's flipped start), and the roll halves swapped.
    pub fn mirrored(&self) -> Result<Self, ScenarioError> {
        let flipped = self.map.row_flipped();
        let mut doc = self.doc.clone();
        if flipped != *self.map {
            doc.map = MapSource::Inline(String::from_utf8(save_map(&flipped)).expect("ascii"));
        }
        let flip = |c: HexCoord| self.map.flip_coord(c);
        doc.init_hex = Teams {
            red: self.doc.init_hex.blue.map(flip),
            blue: self.doc.init_hex.red.map(flip),
        };
        doc.roster = Teams {
            red: self.doc.roster.blue,
            blue: self.doc.roster.red,
        };
        doc.mirrored_rolls = !doc.mirrored_rolls;
        Self::from_document(doc, None)
    }

    /// Returns a copy with the single field at `path` (dot-separated, e.g.
    /// `operators.infantry.speed` or `init_hex.red.1`) set to `value`.
    pub fn apply_override(&self, path: &str, value: Value) -> Result<Self, ScenarioError> {
        if !is_overridable(path) {
            return Err(ScenarioError::UnknownOverride(path.to_string()));
        }
        let mut tree = serde_json::to_value(&self.doc).expect("document serializes");
        let mut slot = &mut tree;
        for part in path.split('.') {
            slot = match slot {
                Value::Object(m) => m.get_mut(part),
                Value::Array(a) => part.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| ScenarioError::UnknownOverride(path.to_string()))?;
        }
        *slot = value;
        let doc: ScenarioDocument = serde_path_to_error::deserialize(tree).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let cfg = Self {
            doc,
            map: self.map.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn is_overridable(path: &str) -> bool {
    const FLAGS: [&str; 5] = [
        "special_terrain",
        "guide_shoot",
        "max_ticks",
        "range_semantics",
        "normalize_reward",
    ];
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        [flag] => FLAGS.contains(flag),
        ["init_hex", "red" | "blue", idx] => idx.parse::<usize>().is_ok_and(|i| i < TEAM_SIZE),
        ["operators", "tank" | "chariot" | "infantry", "speed" | "blood_max"] => true,
        _ => false,
    }
}

/// Loads a bundled scenario by id or, failing that, a document path.
pub fn load_scenario(id_or_path: &str) -> Result<ScenarioConfig, ScenarioError> {
    match id_or_path.parse::<u32>() {
        Ok(id) if id < BUNDLED_COUNT as u32 => ScenarioConfig::bundled(id as u8),
        Ok(id) => Err(ScenarioError::UnknownId(id)),
        Err(_) => ScenarioConfig::from_file(Path::new(id_or_path)),
    }
}
