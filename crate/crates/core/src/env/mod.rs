//! Mini crafting grid-world: raw states, low-level dynamics, the abstraction
//! to symbolic states, recipe configuration, and sealed-goal tasks.
//!
//! Dynamics are pure and deterministic: `step` never mutates its input, and
//! identical action sequences from identical states produce identical states.
//! Invalid-but-well-formed actions (wrong place, no matching rule) are
//! explicit no-ops, distinct from malformed actions (dangling ids, off-grid
//! cells), which are errors.

mod dataset;
mod generate;

pub use dataset::{load_tasks, load_witnesses, write_tasks, write_witnesses};
pub use generate::{chain_for, generate_benchmark, ChainStep, GeneratorConfig};
pub(crate) use generate::kind_phrase;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbolic::{
    eval_goal, AbstractState, GoalFormula, GroundAtom, ModelError, ObjectName, ParseError,
    PredicateSignature, TypeHierarchy, Vocabulary,
};

/// Fixed predicate names emitted by the abstraction.
pub mod pred {
    pub const AGENT_AT: &str = "agent-at";
    pub const OBJECT_AT: &str = "object-at";
    pub const INVENTORY: &str = "inventory";
    /// Marks a not-yet-materialized item id from the fresh pool.
    pub const HYPOTHETICAL: &str = "hypothetical";
}

/// Fixed type names used by the abstraction.
pub mod ty {
    pub const ENTITY: &str = "entity";
    pub const LOCATION: &str = "location";
}

const RESERVED_KINDS: &[&str] = &[
    pred::AGENT_AT,
    pred::OBJECT_AT,
    pred::INVENTORY,
    pred::HYPOTHETICAL,
    ty::ENTITY,
    ty::LOCATION,
    TypeHierarchy::ROOT,
];

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid recipe book: {0}")]
    InvalidRecipe(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("kind `{0}` is not declared by the recipe book")]
    UnknownKind(String),
    #[error("task `{0}` is unsatisfiable: {1}")]
    UnsatisfiableTask(String, String),
    #[error("unsupported benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("goal text: {0}")]
    Goal(#[from] ParseError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record {0}: {1}")]
    Record(usize, serde_json::Error),
}

/// Grid cell, zero-based from the top-left corner.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// Deterministic location object name for the abstraction.
    pub fn location_name(&self) -> ObjectName {
        format!("loc-{}-{}", self.x, self.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A stationary world entity: resource node or crafting station.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldObject {
    pub kind: String,
    pub at: Cell,
}

/// Complete low-level world state.
///
/// `fresh` is the queue of pre-allocated item ids: mining and crafting pop the
/// front deterministically when they materialize a new item. The pool never
/// refills, so ids are globally unique across a task's lifetime.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawState {
    width: u32,
    height: u32,
    agent: Cell,
    world: BTreeMap<ObjectName, WorldObject>,
    inventory: BTreeMap<ObjectName, String>,
    fresh: VecDeque<ObjectName>,
}

impl RawState {
    pub fn new(
        width: u32,
        height: u32,
        agent: Cell,
        world: BTreeMap<ObjectName, WorldObject>,
        inventory: BTreeMap<ObjectName, String>,
        fresh: VecDeque<ObjectName>,
    ) -> Result<Self, EnvError> {
        let state = Self {
            width,
            height,
            agent,
            world,
            inventory,
            fresh,
        };
        state.check_invariants()?;
        Ok(state)
    }

    /// Structural invariants: positive grid, everything on-grid, ids valid
    /// and disjoint across the three id-bearing collections, and no id
    /// shadowing the reserved `loc-` namespace.
    pub fn check_invariants(&self) -> Result<(), EnvError> {
        if self.width == 0 || self.height == 0 {
            return Err(EnvError::InvalidState("grid must be non-empty".into()));
        }
        if !self.on_grid(self.agent) {
            return Err(EnvError::InvalidState(format!(
                "agent at {} is outside the {}x{} grid",
                self.agent, self.width, self.height
            )));
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let ids = self
            .world
            .keys()
            .chain(self.inventory.keys())
            .chain(self.fresh.iter());
        for id in ids {
            if !crate::symbolic::is_ident(id) || id.starts_with("loc-") {
                return Err(EnvError::InvalidState(format!("invalid object id `{id}`")));
            }
            if !seen.insert(id) {
                return Err(EnvError::InvalidState(format!(
                    "object id `{id}` appears in more than one collection"
                )));
            }
        }
        for (id, obj) in &self.world {
            if !crate::symbolic::is_ident(&obj.kind) {
                return Err(EnvError::InvalidState(format!(
                    "object `{id}` has invalid kind `{}`",
                    obj.kind
                )));
            }
            if !self.on_grid(obj.at) {
                return Err(EnvError::InvalidState(format!(
                    "object `{id}` at {} is outside the grid",
                    obj.at
                )));
            }
        }
        for (id, kind) in &self.inventory {
            if !crate::symbolic::is_ident(kind) {
                return Err(EnvError::InvalidState(format!(
                    "item `{id}` has invalid kind `{kind}`"
                )));
            }
        }
        Ok(())
    }

    pub fn on_grid(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    pub fn world(&self) -> &BTreeMap<ObjectName, WorldObject> {
        &self.world
    }

    pub fn inventory(&self) -> &BTreeMap<ObjectName, String> {
        &self.inventory
    }

    /// Remaining fresh item ids, front first.
    pub fn fresh(&self) -> impl Iterator<Item = &str> {
        self.fresh.iter().map(String::as_str)
    }

    /// Every kind named anywhere in the state.
    pub fn kinds(&self) -> BTreeSet<&str> {
        self.world
            .values()
            .map(|o| o.kind.as_str())
            .chain(self.inventory.values().map(String::as_str))
            .collect()
    }
}

/// Primitive action. Movement is teleportation; mining and crafting name the
/// exact ids they operate on, and yields take the next fresh id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LowLevelAction {
    MoveTo { to: Cell },
    Mine { tool: ObjectName, target: ObjectName },
    Craft {
        output: String,
        ingredients: Vec<ObjectName>,
    },
}

impl fmt::Display for LowLevelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LowLevelAction::MoveTo { to } => write!(f, "(move-to {} {})", to.x, to.y),
            LowLevelAction::Mine { tool, target } => write!(f, "(mine {tool} {target})"),
            LowLevelAction::Craft {
                output,
                ingredients,
            } => {
                write!(f, "(craft {output}")?;
                for i in ingredients {
                    write!(f, " {i}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Malformed action: references that do not resolve in this state. Distinct
/// from a legal no-op, which is a [`StepOutcome::NoOp`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("`{0}` is not an inventory item")]
    NotInInventory(String),
    #[error("`{0}` is not a world object")]
    NotInWorld(String),
    #[error("cell ({0}, {1}) is outside the grid")]
    OffGrid(u32, u32),
    #[error("unknown item kind `{0}`")]
    UnknownKind(String),
    #[error("ingredient id `{0}` is listed twice")]
    DuplicateIngredient(String),
}

/// Why a well-formed action left the state unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoOpReason {
    NotAtTarget,
    NoMiningRule,
    NoCraftingRule,
    MissingStation,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Changed(RawState),
    NoOp(NoOpReason),
}

impl StepOutcome {
    /// The successor state, reusing `prev` when the action was a no-op.
    pub fn into_state(self, prev: &RawState) -> RawState {
        match self {
            StepOutcome::Changed(next) => next,
            StepOutcome::NoOp(_) => prev.clone(),
        }
    }
}

/// One way to harvest a resource: standing at `resource` holding a `tool`
/// item yields one `yields` item; consumable resources disappear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningRule {
    /// High-level operator name this rule corresponds to (e.g. `mine-wood`).
    pub op_name: String,
    pub resource: String,
    pub tool: String,
    pub yields: String,
    pub consumes: bool,
}

/// One crafting recipe: consuming the `inputs` multiset from the inventory
/// yields one `output` item, optionally requiring the agent to stand at a
/// station of the given kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftingRule {
    /// High-level operator name this rule corresponds to (e.g. `craft-sword`).
    pub op_name: String,
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
}

/// The world's rule set. Validated on construction: identifiers well-formed,
/// rule keys unique, no recipe yields one of its own inputs, and the crafting
/// dependency graph is acyclic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RecipeBookData", into = "RecipeBookData")]
pub struct RecipeBook {
    mining: Vec<MiningRule>,
    crafting: Vec<CraftingRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecipeBookData {
    mining: Vec<MiningRule>,
    crafting: Vec<CraftingRule>,
}

impl From<RecipeBook> for RecipeBookData {
    fn from(book: RecipeBook) -> Self {
        Self {
            mining: book.mining,
            crafting: book.crafting,
        }
    }
}

impl TryFrom<RecipeBookData> for RecipeBook {
    type Error = String;

    fn try_from(data: RecipeBookData) -> Result<Self, String> {
        RecipeBook::new(data.mining, data.crafting).map_err(|e| e.to_string())
    }
}

impl RecipeBook {
    pub fn new(mining: Vec<MiningRule>, mut crafting: Vec<CraftingRule>) -> Result<Self, EnvError> {
        for rule in &mut crafting {
            rule.inputs.sort();
        }
        let book = Self { mining, crafting };
        book.validate()?;
        Ok(book)
    }

    fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidRecipe(msg));
        for kind in self.kinds() {
            if !crate::symbolic::is_ident(&kind) {
                return bad(format!("invalid kind name `{kind}`"));
            }
            if RESERVED_KINDS.contains(&kind.as_str()) {
                return bad(format!("kind `{kind}` collides with a reserved name"));
            }
        }
        let mut mine_keys = BTreeSet::new();
        for rule in &self.mining {
            if !crate::symbolic::is_ident(&rule.op_name) {
                return bad(format!("invalid operator name `{}`", rule.op_name));
            }
            if !mine_keys.insert((rule.resource.clone(), rule.tool.clone())) {
                return bad(format!(
                    "duplicate mining rule for resource `{}` with tool `{}`",
                    rule.resource, rule.tool
                ));
            }
        }
        let mut craft_keys = BTreeSet::new();
        for rule in &self.crafting {
            if !crate::symbolic::is_ident(&rule.op_name) {
                return bad(format!("invalid operator name `{}`", rule.op_name));
            }
            if rule.inputs.is_empty() {
                return bad(format!("recipe for `{}` has no inputs", rule.output));
            }
            if rule.inputs.contains(&rule.output) {
                return bad(format!("recipe for `{}` consumes its own output", rule.output));
            }
            if !craft_keys.insert((rule.output.clone(), rule.inputs.clone())) {
                return bad(format!("duplicate recipe for `{}`", rule.output));
            }
        }
        // The crafting dependency graph (output -> inputs) must be acyclic.
        let mut visiting = BTreeSet::new();
        let mut done = BTreeSet::new();
        fn visit(
            book: &RecipeBook,
            kind: &str,
            visiting: &mut BTreeSet<String>,
            done: &mut BTreeSet<String>,
        ) -> Result<(), EnvError> {
            if done.contains(kind) {
                return Ok(());
            }
            if !visiting.insert(kind.to_string()) {
                return Err(EnvError::InvalidRecipe(format!(
                    "crafting dependency cycle through `{kind}`"
                )));
            }
            for rule in book.crafting.iter().filter(|r| r.output == kind) {
                for input in &rule.inputs {
                    visit(book, input, visiting, done)?;
                }
            }
            visiting.remove(kind);
            done.insert(kind.to_string());
            Ok(())
        }
        for rule in &self.crafting {
            visit(self, &rule.output, &mut visiting, &mut done)?;
        }
        Ok(())
    }

    pub fn mining(&self) -> &[MiningRule] {
        &self.mining
    }

    pub fn crafting(&self) -> &[CraftingRule] {
        &self.crafting
    }

    pub fn mining_rule(&self, resource: &str, tool: &str) -> Option<&MiningRule> {
        self.mining
            .iter()
            .find(|r| r.resource == resource && r.tool == tool)
    }

    /// The rule matching an output kind and an exact input-kind multiset.
    pub fn crafting_rule(&self, output: &str, input_kinds: &[String]) -> Option<&CraftingRule> {
        let mut sorted = input_kinds.to_vec();
        sorted.sort();
        self.crafting
            .iter()
            .find(|r| r.output == output && r.inputs == sorted)
    }

    /// Every kind mentioned anywhere in the book, sorted.
    pub fn kinds(&self) -> BTreeSet<String> {
        let mut kinds = BTreeSet::new();
        for rule in &self.mining {
            kinds.insert(rule.resource.clone());
            kinds.insert(rule.tool.clone());
            kinds.insert(rule.yields.clone());
        }
        for rule in &self.crafting {
            kinds.extend(rule.inputs.iter().cloned());
            kinds.insert(rule.output.clone());
            if let Some(st) = &rule.station {
                kinds.insert(st.clone());
            }
        }
        kinds
    }

    /// Item kinds obtainable by mining or crafting, sorted.
    pub fn obtainable_kinds(&self) -> BTreeSet<String> {
        self.mining
            .iter()
            .map(|r| r.yields.clone())
            .chain(self.crafting.iter().map(|r| r.output.clone()))
            .collect()
    }

    /// World-object kinds: mining resources and crafting stations.
    pub fn world_kinds(&self) -> BTreeSet<String> {
        self.mining
            .iter()
            .map(|r| r.resource.clone())
            .chain(self.crafting.iter().filter_map(|r| r.station.clone()))
            .collect()
    }

    fn mk_mine(op_name: &str, resource: &str, tool: &str, yields: &str, consumes: bool) -> MiningRule {
        MiningRule {
            op_name: op_name.into(),
            resource: resource.into(),
            tool: tool.into(),
            yields: yields.into(),
            consumes,
        }
    }

    fn mk_craft(op_name: &str, inputs: &[&str], output: &str, station: Option<&str>) -> CraftingRule {
        CraftingRule {
            op_name: op_name.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.into(),
            station: station.map(String::from),
        }
    }

    /// The default world: tree/axe -> wood, iron-ore/pickaxe -> iron-ore-item,
    /// chicken/sword -> feather and sheep/shears -> wool (both renewable),
    /// smelting at a furnace, and station-free crafting for the rest.
    pub fn default_book() -> Self {
        Self::new(
            vec![
                Self::mk_mine("mine-wood", "tree", "axe", "wood", true),
                Self::mk_mine("mine-iron-ore", "iron-ore", "pickaxe", "iron-ore-item", true),
                Self::mk_mine("mine-feather", "chicken", "sword", "feather", false),
                Self::mk_mine("mine-wool", "sheep", "shears", "wool", false),
            ],
            vec![
                Self::mk_craft("craft-iron-ingot", &["iron-ore-item"], "iron-ingot", Some("furnace")),
                Self::mk_craft("craft-stick", &["wood"], "stick", None),
                Self::mk_craft("craft-sword", &["stick", "iron-ingot"], "sword", None),
                Self::mk_craft("craft-shears", &["stick", "iron-ingot"], "shears", None),
                Self::mk_craft("craft-bed", &["wood", "wood", "wool"], "bed", None),
            ],
        )
        .expect("default recipe book is valid")
    }

    /// The full-scale world: every craft happens at a station and beds follow
    /// the deep plank recipe, which lengthens the deepest dependency chains.
    pub fn full_book() -> Self {
        Self::new(
            vec![
                Self::mk_mine("mine-wood", "tree", "axe", "wood", true),
                Self::mk_mine("mine-iron-ore", "iron-ore", "pickaxe", "iron-ore-item", true),
                Self::mk_mine("mine-feather", "chicken", "sword", "feather", false),
                Self::mk_mine("mine-wool", "sheep", "shears", "wool", false),
            ],
            vec![
                Self::mk_craft("craft-iron-ingot", &["iron-ore-item"], "iron-ingot", Some("furnace")),
                Self::mk_craft("craft-stick", &["wood"], "stick", Some("workbench")),
                Self::mk_craft("craft-plank", &["wood"], "plank", Some("workbench")),
                Self::mk_craft("craft-sword", &["stick", "iron-ingot"], "sword", Some("workbench")),
                Self::mk_craft("craft-shears", &["stick", "iron-ingot"], "shears", Some("workbench")),
                Self::mk_craft(
                    "craft-bed",
                    &["plank", "plank", "plank", "wool", "wool", "wool"],
                    "bed",
                    Some("workbench"),
                ),
            ],
        )
        .expect("full recipe book is valid")
    }
}

/// World parameters: grid size, fresh-pool size, and the recipe book.
/// Serializable as the documented TOML schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub width: u32,
    pub height: u32,
    /// Fresh item ids allocated per task.
    pub fresh_pool: usize,
    pub recipes: RecipeBook,
}

impl EnvConfig {
    /// Desk-scale defaults: 8x8 grid, default recipe book.
    pub fn desk() -> Self {
        Self {
            width: 8,
            height: 8,
            fresh_pool: 24,
            recipes: RecipeBook::default_book(),
        }
    }

    /// Full-scale configuration: 12x12 grid, deep recipe book.
    pub fn full() -> Self {
        Self {
            width: 12,
            height: 12,
            fresh_pool: 32,
            recipes: RecipeBook::full_book(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("EnvConfig serializes")
    }
}

/// Benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Mining,
    Crafting,
    Compositional,
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Benchmark::Mining => "mining",
            Benchmark::Crafting => "crafting",
            Benchmark::Compositional => "compositional",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Benchmark {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mining" => Ok(Benchmark::Mining),
            "crafting" => Ok(Benchmark::Crafting),
            "compositional" => Ok(Benchmark::Compositional),
            other => Err(EnvError::UnknownBenchmark(other.to_string())),
        }
    }
}

/// A benchmark task. The goal is sealed: learner-facing code can only query
/// it through [`Env::check_reward`]; nothing else in this crate reads it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub benchmark: Benchmark,
    pub initial: RawState,
    goal: GoalFormula,
}

impl Task {
    pub(crate) fn new(
        id: String,
        instruction: String,
        benchmark: Benchmark,
        initial: RawState,
        goal: GoalFormula,
    ) -> Self {
        Self {
            id,
            instruction,
            benchmark,
            initial,
            goal,
        }
    }

    pub(crate) fn sealed_goal(&self) -> &GoalFormula {
        &self.goal
    }
}

/// A low-level plan that proves a task satisfiable, with the dependency-chain
/// sketch it was derived from. Stored in a sidecar file, never shown to the
/// learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub task_id: String,
    /// High-level operator names, one per chain step.
    pub hl_sketch: Vec<String>,
    pub actions: Vec<LowLevelAction>,
}

/// The world: a recipe book plus the derived symbolic vocabulary.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    vocab: Vocabulary,
}

impl Env {
    pub fn new(config: EnvConfig) -> Self {
        let vocab = vocabulary_for(&config.recipes);
        Self { config, vocab }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn recipes(&self) -> &RecipeBook {
        &self.config.recipes
    }

    /// The symbolic vocabulary: `agent-at`, `object-at`, `inventory`,
    /// `hypothetical`, plus one unary predicate per kind.
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Applies one action. `Err` means the action was malformed for this
    /// state; `NoOp` means well-formed but without effect.
    pub fn step(&self, x: &RawState, u: &LowLevelAction) -> Result<StepOutcome, StepError> {
        match u {
            LowLevelAction::MoveTo { to } => {
                if !x.on_grid(*to) {
                    return Err(StepError::OffGrid(to.x, to.y));
                }
                let mut next = x.clone();
                next.agent = *to;
                Ok(StepOutcome::Changed(next))
            }
            LowLevelAction::Mine { tool, target } => {
                let tool_kind = x.inventory.get(tool).ok_or_else(|| {
                    if x.world.contains_key(tool) || x.fresh.contains(tool) {
                        StepError::NotInInventory(tool.clone())
                    } else {
                        StepError::UnknownId(tool.clone())
                    }
                })?;
                let obj = x.world.get(target).ok_or_else(|| {
                    if x.inventory.contains_key(target) || x.fresh.contains(target) {
                        StepError::NotInWorld(target.clone())
                    } else {
                        StepError::UnknownId(target.clone())
                    }
                })?;
                if x.agent != obj.at {
                    return Ok(StepOutcome::NoOp(NoOpReason::NotAtTarget));
                }
                let Some(rule) = self.recipes().mining_rule(&obj.kind, tool_kind) else {
                    return Ok(StepOutcome::NoOp(NoOpReason::NoMiningRule));
                };
                if x.fresh.is_empty() {
                    return Ok(StepOutcome::NoOp(NoOpReason::PoolExhausted));
                }
                let mut next = x.clone();
                let new_id = next.fresh.pop_front().expect("checked nonempty");
                next.inventory.insert(new_id, rule.yields.clone());
                if rule.consumes {
                    next.world.remove(target);
                }
                Ok(StepOutcome::Changed(next))
            }
            LowLevelAction::Craft {
                output,
                ingredients,
            } => {
                let mut seen = BTreeSet::new();
                for id in ingredients {
                    if !seen.insert(id) {
                        return Err(StepError::DuplicateIngredient(id.clone()));
                    }
                }
                let mut kinds = Vec::with_capacity(ingredients.len());
                for id in ingredients {
                    let kind = x.inventory.get(id).ok_or_else(|| {
                        if x.world.contains_key(id) || x.fresh.contains(id) {
                            StepError::NotInInventory(id.clone())
                        } else {
                            StepError::UnknownId(id.clone())
                        }
                    })?;
                    kinds.push(kind.clone());
                }
                if !self.recipes().kinds().contains(output) {
                    return Err(StepError::UnknownKind(output.clone()));
                }
                let Some(rule) = self.recipes().crafting_rule(output, &kinds) else {
                    return Ok(StepOutcome::NoOp(NoOpReason::NoCraftingRule));
                };
                if let Some(station) = &rule.station {
                    let here = x
                        .world
                        .values()
                        .any(|o| o.at == x.agent && o.kind == *station);
                    if !here {
                        return Ok(StepOutcome::NoOp(NoOpReason::MissingStation));
                    }
                }
                if x.fresh.is_empty() {
                    return Ok(StepOutcome::NoOp(NoOpReason::PoolExhausted));
                }
                let mut next = x.clone();
                for id in ingredients {
                    next.inventory.remove(id);
                }
                let new_id = next.fresh.pop_front().expect("checked nonempty");
                next.inventory.insert(new_id, rule.output.clone());
                Ok(StepOutcome::Changed(next))
            }
        }
    }

    /// Well-formed actions with a chance of effect, in a fixed order: moves
    /// to occupied cells (movement is teleportation, so unoccupied cells are
    /// never useful waypoints), then mining pairs matching some rule, then
    /// ingredient combinations matching some recipe. Position and station
    /// requirements are not pre-filtered; those actions no-op when executed
    /// early and become useful after a move.
    pub fn enumerate_actions(&self, x: &RawState) -> Vec<LowLevelAction> {
        let mut actions = Vec::new();
        let cells: BTreeSet<Cell> = x.world.values().map(|o| o.at).collect();
        for cell in cells {
            if cell != x.agent {
                actions.push(LowLevelAction::MoveTo { to: cell });
            }
        }
        for (target, obj) in &x.world {
            for (tool, tool_kind) in &x.inventory {
                if self.recipes().mining_rule(&obj.kind, tool_kind).is_some() {
                    actions.push(LowLevelAction::Mine {
                        tool: tool.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        let mut by_kind: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, kind) in &x.inventory {
            by_kind.entry(kind).or_default().push(id);
        }
        for rule in self.recipes().crafting() {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for input in &rule.inputs {
                *counts.entry(input.as_str()).or_default() += 1;
            }
            let mut per_kind: Vec<Vec<Vec<&str>>> = Vec::new();
            let mut feasible = true;
            for (kind, &count) in &counts {
                match by_kind.get(kind) {
                    Some(ids) if ids.len() >= count => {
                        per_kind.push(combinations(ids, count));
                    }
                    _ => {
                        feasible = false;
                        break;
                    }
                }
            }
            if !feasible {
                continue;
            }
            let mut combos: Vec<Vec<&str>> = vec![Vec::new()];
            for options in &per_kind {
                let mut next = Vec::new();
                for base in &combos {
                    for option in options {
                        let mut ids = base.clone();
                        ids.extend(option.iter().copied());
                        next.push(ids);
                    }
                }
                combos = next;
            }
            for ids in combos {
                actions.push(LowLevelAction::Craft {
                    output: rule.output.clone(),
                    ingredients: ids.into_iter().map(String::from).collect(),
                });
            }
        }
        actions
    }

    /// Maps a raw state to its symbolic abstraction. Emits one `location`
    /// object per occupied cell (plus the agent's cell), one `entity` object
    /// per world object, inventory item, and fresh id, and the corresponding
    /// `agent-at`/`object-at`/kind/`inventory`/`hypothetical` atoms.
    pub fn abstract_state(&self, x: &RawState) -> Result<AbstractState, EnvError> {
        let mut objects: BTreeMap<ObjectName, String> = BTreeMap::new();
        let mut atoms: BTreeSet<GroundAtom> = BTreeSet::new();
        let known = self.recipes().kinds();

        let agent_loc = x.agent.location_name();
        objects.insert(agent_loc.clone(), ty::LOCATION.to_string());
        atoms.insert(GroundAtom::new(pred::AGENT_AT, &[&agent_loc]));

        for (id, obj) in &x.world {
            if !known.contains(&obj.kind) {
                return Err(EnvError::UnknownKind(obj.kind.clone()));
            }
            let loc = obj.at.location_name();
            objects.insert(loc.clone(), ty::LOCATION.to_string());
            objects.insert(id.clone(), ty::ENTITY.to_string());
            atoms.insert(GroundAtom::new(pred::OBJECT_AT, &[id, &loc]));
            atoms.insert(GroundAtom::new(&obj.kind, &[id]));
        }
        for (id, kind) in &x.inventory {
            if !known.contains(kind) {
                return Err(EnvError::UnknownKind(kind.clone()));
            }
            objects.insert(id.clone(), ty::ENTITY.to_string());
            atoms.insert(GroundAtom::new(pred::INVENTORY, &[id]));
            atoms.insert(GroundAtom::new(kind, &[id]));
        }
        for id in &x.fresh {
            objects.insert(id.clone(), ty::ENTITY.to_string());
            atoms.insert(GroundAtom::new(pred::HYPOTHETICAL, &[id]));
        }
        Ok(AbstractState::new(&self.vocab, objects, atoms)?)
    }

    /// The hidden reward channel: whether the task's sealed goal holds in the
    /// abstraction of `x`. This is the only way learner code observes goals.
    pub fn check_reward(&self, task: &Task, x: &RawState) -> Result<bool, EnvError> {
        let abs = self.abstract_state(x)?;
        Ok(eval_goal(&abs, task.sealed_goal(), self.vocab.types()))
    }

    /// Replays a low-level plan from a state; malformed steps are errors,
    /// no-op steps are kept (they are legal).
    pub fn replay(&self, x0: &RawState, actions: &[LowLevelAction]) -> Result<RawState, EnvError> {
        let mut x = x0.clone();
        for u in actions {
            match self.step(&x, u) {
                Ok(outcome) => x = outcome.into_state(&x),
                Err(e) => {
                    return Err(EnvError::InvalidState(format!(
                        "malformed action {u}: {e}"
                    )))
                }
            }
        }
        Ok(x)
    }
}

/// k-element sorted combinations of `ids`, lexicographic.
fn combinations<'a>(ids: &[&'a str], k: usize) -> Vec<Vec<&'a str>> {
    fn rec<'a>(ids: &[&'a str], k: usize, start: usize, cur: &mut Vec<&'a str>, out: &mut Vec<Vec<&'a str>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..ids.len() {
            cur.push(ids[i]);
            rec(ids, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(ids, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Builds the symbolic vocabulary for a recipe book.
pub fn vocabulary_for(book: &RecipeBook) -> Vocabulary {
    let types = TypeHierarchy::from_pairs([
        (ty::ENTITY.to_string(), TypeHierarchy::ROOT.to_string()),
        (ty::LOCATION.to_string(), TypeHierarchy::ROOT.to_string()),
    ])
    .expect("fixed hierarchy is valid");
    let mut vocab = Vocabulary::new(types);
    vocab
        .declare_predicate(PredicateSignature::new(pred::AGENT_AT, &[ty::LOCATION]))
        .expect("fixed predicate");
    vocab
        .declare_predicate(PredicateSignature::new(
            pred::OBJECT_AT,
            &[ty::ENTITY, ty::LOCATION],
        ))
        .expect("fixed predicate");
    vocab
        .declare_predicate(PredicateSignature::new(pred::INVENTORY, &[ty::ENTITY]))
        .expect("fixed predicate");
    vocab
        .declare_predicate(PredicateSignature::new(pred::HYPOTHETICAL, &[ty::ENTITY]))
        .expect("fixed predicate");
    for kind in book.kinds() {
        vocab
            .declare_predicate(PredicateSignature::new(&kind, &[ty::ENTITY]))
            .expect("kind names are validated against reserved names");
    }
    vocab
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env::new(EnvConfig::desk())
    }

    /// Agent at (1,1); tree t0 at (1,1); furnace f0 at (2,2); axe and one
    /// iron-ore-item in inventory; fresh pool n00..n03.
    fn state() -> RawState {
        RawState::new(
            8,
            8,
            Cell::new(1, 1),
            [
                (
                    "t0".to_string(),
                    WorldObject {
                        kind: "tree".into(),
                        at: Cell::new(1, 1),
                    },
                ),
                (
                    "f0".to_string(),
                    WorldObject {
                        kind: "furnace".into(),
                        at: Cell::new(2, 2),
                    },
                ),
            ]
            .into(),
            [
                ("axe0".to_string(), "axe".to_string()),
                ("ore0".to_string(), "iron-ore-item".to_string()),
            ]
            .into(),
            ["n00".to_string(), "n01".to_string(), "n02".to_string(), "n03".to_string()].into(),
        )
        .unwrap()
    }

    #[test]
    fn mining_at_the_resource_yields_the_item_and_consumes_the_node() {
        let env = env();
        let x = state();
        let out = env
            .step(
                &x,
                &LowLevelAction::Mine {
                    tool: "axe0".into(),
                    target: "t0".into(),
                },
            )
            .unwrap();
        let StepOutcome::Changed(next) = out else {
            panic!("expected a state change");
        };
        assert_eq!(next.inventory().get("n00"), Some(&"wood".to_string()));
        assert!(!next.world().contains_key("t0"));
        assert_eq!(next.fresh().count(), 3);
        // Source state untouched.
        assert!(x.world().contains_key("t0"));
    }

    #[test]
    fn mining_away_from_the_target_or_with_the_wrong_tool_is_a_no_op() {
        let env = env();
        let mut x = state();
        x.agent = Cell::new(0, 0);
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Mine {
                    tool: "axe0".into(),
                    target: "t0".into()
                }
            )
            .unwrap(),
            StepOutcome::NoOp(NoOpReason::NotAtTarget)
        );
        let x = state();
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Mine {
                    tool: "ore0".into(),
                    target: "t0".into()
                }
            )
            .unwrap(),
            StepOutcome::NoOp(NoOpReason::NoMiningRule)
        );
    }

    #[test]
    fn malformed_actions_are_errors_not_no_ops() {
        let env = env();
        let x = state();
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Mine {
                    tool: "ghost".into(),
                    target: "t0".into()
                }
            ),
            Err(StepError::UnknownId("ghost".into()))
        );
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Mine {
                    tool: "t0".into(),
                    target: "t0".into()
                }
            ),
            Err(StepError::NotInInventory("t0".into()))
        );
        assert_eq!(
            env.step(&x, &LowLevelAction::MoveTo { to: Cell::new(99, 0) }),
            Err(StepError::OffGrid(99, 0))
        );
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Craft {
                    output: "iron-ingot".into(),
                    ingredients: vec!["ore0".into(), "ore0".into()]
                }
            ),
            Err(StepError::DuplicateIngredient("ore0".into()))
        );
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Craft {
                    output: "gold".into(),
                    ingredients: vec!["ore0".into()]
                }
            ),
            Err(StepError::UnknownKind("gold".into()))
        );
    }

    #[test]
    fn crafting_requires_the_station_cell_when_the_rule_names_one() {
        let env = env();
        let x = state();
        let craft = LowLevelAction::Craft {
            output: "iron-ingot".into(),
            ingredients: vec!["ore0".into()],
        };
        assert_eq!(
            env.step(&x, &craft).unwrap(),
            StepOutcome::NoOp(NoOpReason::MissingStation)
        );
        let moved = env
            .step(&x, &LowLevelAction::MoveTo { to: Cell::new(2, 2) })
            .unwrap()
            .into_state(&x);
        let out = env.step(&moved, &craft).unwrap();
        let StepOutcome::Changed(next) = out else {
            panic!("expected a state change");
        };
        assert_eq!(next.inventory().get("n00"), Some(&"iron-ingot".to_string()));
        assert!(!next.inventory().contains_key("ore0"));
    }

    #[test]
    fn crafting_with_a_wrong_multiset_is_a_no_op() {
        let env = env();
        let x = state();
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Craft {
                    output: "stick".into(),
                    ingredients: vec!["ore0".into()]
                }
            )
            .unwrap(),
            StepOutcome::NoOp(NoOpReason::NoCraftingRule)
        );
    }

    #[test]
    fn move_is_idempotent_teleportation() {
        let env = env();
        let x = state();
        let once = env
            .step(&x, &LowLevelAction::MoveTo { to: Cell::new(5, 6) })
            .unwrap()
            .into_state(&x);
        let twice = env
            .step(&once, &LowLevelAction::MoveTo { to: Cell::new(5, 6) })
            .unwrap()
            .into_state(&once);
        assert_eq!(once, twice);
        assert_eq!(once.agent(), Cell::new(5, 6));
    }

    #[test]
    fn fresh_pool_exhaustion_is_a_no_op() {
        let env = env();
        let mut x = state();
        x.fresh.clear();
        assert_eq!(
            env.step(
                &x,
                &LowLevelAction::Mine {
                    tool: "axe0".into(),
                    target: "t0".into()
                }
            )
            .unwrap(),
            StepOutcome::NoOp(NoOpReason::PoolExhausted)
        );
    }

    #[test]
    fn abstraction_emits_the_documented_atoms() {
        let env = env();
        let x = state();
        let abs = env.abstract_state(&x).unwrap();
        let expected: Vec<&str> = vec![
            "(agent-at loc-1-1)",
            "(axe axe0)",
            "(furnace f0)",
            "(hypothetical n00)",
            "(hypothetical n01)",
            "(hypothetical n02)",
            "(hypothetical n03)",
            "(inventory axe0)",
            "(inventory ore0)",
            "(iron-ore-item ore0)",
            "(object-at f0 loc-2-2)",
            "(object-at t0 loc-1-1)",
            "(tree t0)",
        ];
        let got: Vec<String> = abs.atoms().iter().map(|a| a.to_string()).collect();
        assert_eq!(got, expected);
        assert_eq!(abs.objects().get("loc-2-2"), Some(&"location".to_string()));
        assert_eq!(abs.objects().get("axe0"), Some(&"entity".to_string()));
    }

    #[test]
    fn abstraction_changes_only_touch_entities_affected_by_the_action() {
        let env = env();
        let x = state();
        let before = env.abstract_state(&x).unwrap();
        let action = LowLevelAction::Mine {
            tool: "axe0".into(),
            target: "t0".into(),
        };
        let after_raw = env.step(&x, &action).unwrap().into_state(&x);
        let after = env.abstract_state(&after_raw).unwrap();
        let touched = ["t0", "n00", "loc-1-1"];
        let added: Vec<_> = after.atoms().difference(before.atoms()).collect();
        let removed: Vec<_> = before.atoms().difference(after.atoms()).collect();
        for atom in added.iter().chain(removed.iter()) {
            assert!(
                atom.args.iter().any(|a| touched.contains(&a.as_str())),
                "atom {atom} mentions only untouched entities"
            );
        }
    }

    #[test]
    fn enumerate_actions_is_deterministic_and_well_formed() {
        let env = env();
        let x = state();
        let actions = env.enumerate_actions(&x);
        let rendered: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                "(move-to 2 2)",
                "(mine axe0 t0)",
                "(craft iron-ingot ore0)",
            ]
        );
        for action in &actions {
            assert!(env.step(&x, action).is_ok(), "{action} must be well-formed");
        }
        assert_eq!(actions, env.enumerate_actions(&x));
    }

    #[test]
    fn enumerate_actions_expands_ingredient_combinations() {
        let env = env();
        let mut x = state();
        x.inventory.insert("w0".into(), "wood".into());
        x.inventory.insert("w1".into(), "wood".into());
        x.inventory.insert("wool0".into(), "wool".into());
        let actions = env.enumerate_actions(&x);
        let crafts: Vec<String> = actions
            .iter()
            .filter(|a| matches!(a, LowLevelAction::Craft { .. }))
            .map(|a| a.to_string())
            .collect();
        assert_eq!(
            crafts,
            vec![
                "(craft iron-ingot ore0)",
                "(craft stick w0)",
                "(craft stick w1)",
                "(craft bed w0 w1 wool0)",
            ]
        );
    }

    #[test]
    fn identical_action_sequences_give_identical_states() {
        let env = env();
        let seq = [
            LowLevelAction::Mine {
                tool: "axe0".into(),
                target: "t0".into(),
            },
            LowLevelAction::MoveTo { to: Cell::new(2, 2) },
            LowLevelAction::Craft {
                output: "iron-ingot".into(),
                ingredients: vec!["ore0".into()],
            },
            LowLevelAction::Craft {
                output: "stick".into(),
                ingredients: vec!["n00".into()],
            },
        ];
        let one = env.replay(&state(), &seq).unwrap();
        let two = env.replay(&state(), &seq).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.inventory().get("n01"), Some(&"iron-ingot".to_string()));
        assert_eq!(one.inventory().get("n02"), Some(&"stick".to_string()));
    }

    #[test]
    fn recipe_book_validation_rejects_cycles_and_self_consumption() {
        let err = RecipeBook::new(
            vec![],
            vec![RecipeBook::mk_craft("craft-x", &["x"], "x", None)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("its own output"), "{err}");

        let err = RecipeBook::new(
            vec![],
            vec![
                RecipeBook::mk_craft("craft-a", &["b"], "a", None),
                RecipeBook::mk_craft("craft-b", &["a"], "b", None),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");

        let err = RecipeBook::new(
            vec![],
            vec![RecipeBook::mk_craft("craft-bad", &["wood"], "inventory", None)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("reserved"), "{err}");
    }

    #[test]
    fn state_invariants_reject_duplicate_and_reserved_ids() {
        let err = RawState::new(
            8,
            8,
            Cell::new(0, 0),
            [(
                "a".to_string(),
                WorldObject {
                    kind: "tree".into(),
                    at: Cell::new(0, 0),
                },
            )]
            .into(),
            [("a".to_string(), "axe".to_string())].into(),
            [].into(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("more than one"), "{err}");

        let err = RawState::new(
            8,
            8,
            Cell::new(0, 0),
            BTreeMap::new(),
            [("loc-1-1".to_string(), "axe".to_string())].into(),
            [].into(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("invalid object id"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = EnvConfig::desk();
        let text = cfg.to_toml();
        let back = EnvConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        let full = EnvConfig::full();
        assert_eq!(full, EnvConfig::from_toml(&full.to_toml()).unwrap());
    }

    #[test]
    fn vocabulary_covers_every_kind_as_a_unary_predicate() {
        let env = env();
        let vocab = env.vocabulary();
        for kind in env.recipes().kinds() {
            let sig = vocab.predicate(&kind).expect("kind predicate");
            assert_eq!(sig.param_types, vec![ty::ENTITY.to_string()]);
        }
        assert!(vocab.predicate(pred::AGENT_AT).is_some());
        assert!(vocab.predicate(pred::OBJECT_AT).is_some());
    }
}
