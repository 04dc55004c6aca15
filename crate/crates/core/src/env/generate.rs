//! Seeded benchmark generation.
//!
//! Every task is built from the dependency chain of its goal kind: the
//! deterministic sequence of mining and crafting steps that produces one item
//! of that kind from nothing but leaf tools. A benchmark family is a policy
//! for cutting that chain: the prefix is granted as initial inventory, the
//! suffix must be performed in the world. Each task ships with a replayed
//! witness plan proving it satisfiable; witnesses live in a sidecar file and
//! are never shown to the learner.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::symbolic::{Atom, GoalFormula, Literal, Term, TypedVar};

use super::{
    pred, ty, Benchmark, Cell, CraftingRule, Env, EnvConfig, EnvError, LowLevelAction, MiningRule,
    RawState, RecipeBook, StepOutcome, Task, Witness, WorldObject,
};

/// One step of a dependency chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainStep {
    Mine(MiningRule),
    Craft(CraftingRule),
}

impl ChainStep {
    pub fn op_name(&self) -> &str {
        match self {
            ChainStep::Mine(r) => &r.op_name,
            ChainStep::Craft(r) => &r.op_name,
        }
    }

    /// Low-level actions this step costs when executed by the witness
    /// builder: a move before every mine and before every station craft.
    fn ll_cost(&self) -> usize {
        match self {
            ChainStep::Mine(_) => 2,
            ChainStep::Craft(r) => 1 + usize::from(r.station.is_some()),
        }
    }
}

/// The deterministic dependency chain producing one item of `goal_kind`:
/// rules are resolved mining-first, then by book order, and persistent tools
/// are acquired once. Errs on kinds no rule can produce transitively through
/// a cycle of tool requirements.
pub fn chain_for(book: &RecipeBook, goal_kind: &str) -> Result<Vec<ChainStep>, EnvError> {
    fn acquire(
        book: &RecipeBook,
        kind: &str,
        inv: &mut BTreeMap<String, usize>,
        stack: &mut Vec<String>,
        steps: &mut Vec<ChainStep>,
    ) -> Result<(), EnvError> {
        if inv.get(kind).copied().unwrap_or(0) > 0 {
            return Ok(());
        }
        if stack.iter().any(|k| k == kind) {
            return Err(EnvError::InvalidRecipe(format!(
                "tool dependency cycle through `{kind}`"
            )));
        }
        stack.push(kind.to_string());
        if let Some(rule) = book.mining().iter().find(|r| r.yields == kind) {
            if inv.get(&rule.tool).copied().unwrap_or(0) == 0 {
                acquire(book, &rule.tool, inv, stack, steps)?;
            }
            steps.push(ChainStep::Mine(rule.clone()));
            *inv.entry(kind.to_string()).or_default() += 1;
        } else if let Some(rule) = book.crafting().iter().find(|r| r.output == kind) {
            for input in &rule.inputs {
                acquire(book, input, inv, stack, steps)?;
                *inv.get_mut(input).expect("just acquired") -= 1;
            }
            steps.push(ChainStep::Craft(rule.clone()));
            *inv.entry(kind.to_string()).or_default() += 1;
        } else {
            // Leaf kind: granted, not produced.
            *inv.entry(kind.to_string()).or_default() += 1;
        }
        stack.pop();
        Ok(())
    }

    let mut steps = Vec::new();
    acquire(
        book,
        goal_kind,
        &mut BTreeMap::new(),
        &mut Vec::new(),
        &mut steps,
    )?;
    Ok(steps)
}

/// A chain split at index `g`: everything before is granted, everything from
/// `g` on must be performed.
struct Cut {
    /// Initial inventory kinds with multiplicities: prefix leftovers plus the
    /// leaf tools the suffix still needs.
    granted: BTreeMap<String, usize>,
    remaining: Vec<ChainStep>,
}

fn cut_chain(chain: &[ChainStep], g: usize) -> Cut {
    // Simulates one step; a missing mining tool must be a leaf (anything
    // craftable is produced by an earlier chain step), so it is granted and
    // recorded in `grants`.
    fn sim(
        inv: &mut BTreeMap<String, usize>,
        step: &ChainStep,
        grants: &mut BTreeMap<String, usize>,
    ) {
        match step {
            ChainStep::Mine(r) => {
                if inv.get(&r.tool).copied().unwrap_or(0) == 0 {
                    *inv.entry(r.tool.clone()).or_default() += 1;
                    *grants.entry(r.tool.clone()).or_default() += 1;
                }
                *inv.entry(r.yields.clone()).or_default() += 1;
            }
            ChainStep::Craft(r) => {
                for input in &r.inputs {
                    *inv.get_mut(input).expect("chain order") -= 1;
                }
                *inv.entry(r.output.clone()).or_default() += 1;
            }
        }
    }

    // Prefix products (leaf grants included) form the initial inventory.
    let mut inv: BTreeMap<String, usize> = BTreeMap::new();
    let mut prefix_grants = BTreeMap::new();
    for step in &chain[..g] {
        sim(&mut inv, step, &mut prefix_grants);
    }
    // Leaf tools first needed by the suffix are granted at time zero too.
    let mut suffix_grants: BTreeMap<String, usize> = BTreeMap::new();
    let mut look = inv.clone();
    for step in &chain[g..] {
        sim(&mut look, step, &mut suffix_grants);
    }
    for (kind, count) in suffix_grants {
        *inv.entry(kind).or_default() += count;
    }
    Cut {
        granted: inv,
        remaining: chain[g..].to_vec(),
    }
}

fn mines_in(steps: &[ChainStep]) -> usize {
    steps
        .iter()
        .filter(|s| matches!(s, ChainStep::Mine(_)))
        .count()
}

fn ll_len(steps: &[ChainStep]) -> usize {
    steps.iter().map(ChainStep::ll_cost).sum()
}

/// Cut indices for a crafting task: one or two mines remain and the suffix
/// is at least five primitive actions long, so no granted prefix collapses
/// the task to something a depth-limited search solves without the chain.
fn crafting_cuts(chain: &[ChainStep]) -> Vec<usize> {
    (0..chain.len())
        .filter(|&g| {
            let remaining = &chain[g..];
            let m = mines_in(remaining);
            (1..=2).contains(&m) && ll_len(remaining) >= 5
        })
        .collect()
}

/// Human-facing phrase for an item kind: trailing `-item` dropped, hyphens
/// spaced. The inverse over a book's obtainable kinds is computed by the
/// instruction parser.
pub(crate) fn kind_phrase(kind: &str) -> String {
    let base = kind.strip_suffix("-item").unwrap_or(kind);
    base.replace('-', " ")
}

fn instruction_for(book: &RecipeBook, goal_kind: &str) -> String {
    let phrase = kind_phrase(goal_kind);
    if book.mining().iter().any(|r| r.yields == goal_kind) {
        format!("Mine {phrase}")
    } else {
        let article = if phrase.starts_with(['a', 'e', 'i', 'o', 'u']) {
            "an"
        } else {
            "a"
        };
        format!("Craft {article} {phrase}")
    }
}

fn goal_for(goal_kind: &str) -> GoalFormula {
    let unary = |p: &str| Literal::pos(Atom::new(p, vec![Term::Var("g".into())]));
    GoalFormula::new(
        vec![TypedVar::new("g", ty::ENTITY)],
        vec![unary(goal_kind), unary(pred::INVENTORY)],
    )
    .expect("goal shape is fixed")
}

/// Mining-tool kinds no rule produces (granted leaves such as basic tools).
fn leaf_tool_kinds(book: &RecipeBook) -> Vec<String> {
    let obtainable = book.obtainable_kinds();
    book.mining()
        .iter()
        .map(|r| r.tool.clone())
        .filter(|k| !obtainable.contains(k))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Goal kinds for a benchmark family, sorted; tasks cycle through them.
fn goal_kinds(book: &RecipeBook, benchmark: Benchmark) -> Result<Vec<String>, EnvError> {
    let kinds: Vec<String> = match benchmark {
        Benchmark::Mining => book
            .mining()
            .iter()
            .map(|r| r.yields.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect(),
        Benchmark::Crafting => {
            let mut kinds = Vec::new();
            for output in book
                .crafting()
                .iter()
                .map(|r| r.output.clone())
                .collect::<std::collections::BTreeSet<_>>()
            {
                let chain = chain_for(book, &output)?;
                if !crafting_cuts(&chain).is_empty() {
                    kinds.push(output);
                }
            }
            kinds
        }
        Benchmark::Compositional => book.obtainable_kinds().into_iter().collect(),
    };
    if kinds.is_empty() {
        return Err(EnvError::InvalidRecipe(format!(
            "recipe book admits no {benchmark} tasks"
        )));
    }
    Ok(kinds)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub benchmark: Benchmark,
    pub count: usize,
    pub seed: u64,
    pub env: EnvConfig,
}

/// Generates `count` seeded tasks with verified witnesses. Deterministic:
/// the same configuration always yields byte-identical tasks and witnesses.
pub fn generate_benchmark(cfg: &GeneratorConfig) -> Result<(Vec<Task>, Vec<Witness>), EnvError> {
    let env = Env::new(cfg.env.clone());
    let book = env.recipes();
    let kinds = goal_kinds(book, cfg.benchmark)?;
    let leaf_tools = leaf_tool_kinds(book);
    let mut tasks = Vec::with_capacity(cfg.count);
    let mut witnesses = Vec::with_capacity(cfg.count);

    for i in 0..cfg.count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let goal_kind = &kinds[i % kinds.len()];
        let chain = chain_for(book, goal_kind)?;

        let g = match cfg.benchmark {
            Benchmark::Mining => chain.len() - 1,
            Benchmark::Crafting => {
                let cuts = crafting_cuts(&chain);
                cuts[rng.gen_range(0..cuts.len())]
            }
            Benchmark::Compositional => 0,
        };
        let mut cut = cut_chain(&chain, g);
        if cfg.benchmark == Benchmark::Compositional {
            // Uniform starter kit: every leaf tool, whether or not this
            // particular chain uses it.
            for tool in &leaf_tools {
                cut.granted.entry(tool.clone()).or_insert(1);
            }
        }

        let task_id = format!("{}-{:03}", cfg.benchmark, i);
        let (initial, needed_kinds) =
            synthesize_world(&env, &cut, &mut rng).map_err(|e| match e {
                EnvError::InvalidState(msg) => {
                    EnvError::UnsatisfiableTask(task_id.clone(), msg)
                }
                other => other,
            })?;

        let instruction = instruction_for(book, goal_kind);
        let goal = goal_for(goal_kind);
        let task = Task::new(
            task_id.clone(),
            instruction,
            cfg.benchmark,
            initial,
            goal,
        );

        if env.check_reward(&task, &task.initial)? {
            return Err(EnvError::UnsatisfiableTask(
                task_id,
                "goal already satisfied in the initial state".into(),
            ));
        }
        let witness = build_witness(&env, &task, &cut.remaining)?;
        debug_assert!(needed_kinds.iter().all(|k| book.kinds().contains(k)));
        tasks.push(task);
        witnesses.push(witness);
    }
    Ok((tasks, witnesses))
}

/// Builds the initial raw state for a cut: granted inventory, world objects
/// for every remaining mine (plus one spare node per consumable resource)
/// and station, and one or two seeded distractor objects.
fn synthesize_world(
    env: &Env,
    cut: &Cut,
    rng: &mut ChaCha8Rng,
) -> Result<(RawState, Vec<String>), EnvError> {
    let cfg = env.config();
    let book = env.recipes();

    // World object requirements from the remaining steps.
    let mut resource_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut renewable: BTreeMap<String, bool> = BTreeMap::new();
    let mut stations: std::collections::BTreeSet<String> = Default::default();
    for step in &cut.remaining {
        match step {
            ChainStep::Mine(r) => {
                *resource_counts.entry(r.resource.clone()).or_default() += 1;
                renewable.insert(r.resource.clone(), !r.consumes);
            }
            ChainStep::Craft(r) => {
                if let Some(st) = &r.station {
                    stations.insert(st.clone());
                }
            }
        }
    }
    let mut placements: Vec<String> = Vec::new();
    for (kind, count) in &resource_counts {
        let n = if renewable[kind] { 1 } else { count + 1 };
        placements.extend(std::iter::repeat(kind.clone()).take(n));
    }
    placements.extend(stations.iter().cloned());
    let needed: Vec<String> = placements.clone();

    // Seeded distractors from world kinds the task does not need.
    let candidates: Vec<String> = book
        .world_kinds()
        .into_iter()
        .filter(|k| !needed.contains(k))
        .collect();
    if !candidates.is_empty() {
        let n = rng.gen_range(1..=2usize.min(candidates.len()));
        let picks = rand::seq::index::sample(rng, candidates.len(), n);
        for idx in picks.iter() {
            placements.push(candidates[idx].clone());
        }
    }

    let total_cells = (cfg.width * cfg.height) as usize;
    if placements.len() > total_cells {
        return Err(EnvError::InvalidState(format!(
            "{} objects do not fit on a {}x{} grid",
            placements.len(),
            cfg.width,
            cfg.height
        )));
    }
    let agent = Cell::new(rng.gen_range(0..cfg.width), rng.gen_range(0..cfg.height));
    let cells = rand::seq::index::sample(rng, total_cells, placements.len());

    let mut world: BTreeMap<String, WorldObject> = BTreeMap::new();
    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    for (kind, cell_idx) in placements.iter().zip(cells.iter()) {
        let n = counters.entry(kind.clone()).or_default();
        let id = format!("{kind}{n}");
        *n += 1;
        let at = Cell::new(
            (cell_idx % cfg.width as usize) as u32,
            (cell_idx / cfg.width as usize) as u32,
        );
        world.insert(id, WorldObject { kind: kind.clone(), at });
    }

    let mut inventory: BTreeMap<String, String> = BTreeMap::new();
    for (kind, count) in &cut.granted {
        for n in 0..*count {
            inventory.insert(format!("{kind}{n}"), kind.clone());
        }
    }

    let fresh = (0..cfg.fresh_pool).map(|n| format!("n{n:02}")).collect();
    let state = RawState::new(cfg.width, cfg.height, agent, world, inventory, fresh)?;
    Ok((state, needed))
}

/// Executes the remaining chain against the real dynamics, recording the
/// actions, and verifies the final state earns the reward.
fn build_witness(env: &Env, task: &Task, remaining: &[ChainStep]) -> Result<Witness, EnvError> {
    let mut x = task.initial.clone();
    let mut actions: Vec<LowLevelAction> = Vec::new();
    let mut hl_sketch: Vec<String> = Vec::new();
    let fail = |msg: String| EnvError::UnsatisfiableTask(task.id.clone(), msg);

    for step in remaining {
        hl_sketch.push(step.op_name().to_string());
        let first_new = actions.len();
        match step {
            ChainStep::Mine(rule) => {
                let (target, obj) = x
                    .world
                    .iter()
                    .find(|(_, o)| o.kind == rule.resource)
                    .map(|(id, o)| (id.clone(), o.clone()))
                    .ok_or_else(|| fail(format!("no `{}` node left", rule.resource)))?;
                let tool = x
                    .inventory
                    .iter()
                    .find(|(_, k)| **k == rule.tool)
                    .map(|(id, _)| id.clone())
                    .ok_or_else(|| fail(format!("no `{}` in inventory", rule.tool)))?;
                actions.push(LowLevelAction::MoveTo { to: obj.at });
                actions.push(LowLevelAction::Mine { tool, target });
            }
            ChainStep::Craft(rule) => {
                if let Some(station) = &rule.station {
                    let at = x
                        .world
                        .values()
                        .find(|o| o.kind == *station)
                        .map(|o| o.at)
                        .ok_or_else(|| fail(format!("no `{station}` station placed")))?;
                    actions.push(LowLevelAction::MoveTo { to: at });
                }
                let mut ingredients = Vec::new();
                let mut used: std::collections::BTreeSet<String> = Default::default();
                for kind in &rule.inputs {
                    let id = x
                        .inventory
                        .iter()
                        .find(|(id, k)| **k == *kind && !used.contains(*id))
                        .map(|(id, _)| id.clone())
                        .ok_or_else(|| fail(format!("no spare `{kind}` in inventory")))?;
                    used.insert(id.clone());
                    ingredients.push(id);
                }
                ingredients.sort();
                actions.push(LowLevelAction::Craft {
                    output: rule.output.clone(),
                    ingredients,
                });
            }
        }
        // Replay the newly appended actions to advance the simulation.
        for u in &actions[first_new..] {
            match env.step(&x, u).map_err(|e| fail(format!("{u}: {e}")))? {
                StepOutcome::Changed(next) => x = next,
                StepOutcome::NoOp(reason) => {
                    return Err(fail(format!("{u} was a no-op ({reason:?})")))
                }
            }
        }
    }
    if !env.check_reward(task, &x)? {
        return Err(fail("witness does not reach the goal".into()));
    }
    Ok(Witness {
        task_id: task.id.clone(),
        hl_sketch,
        actions,
    })
}
