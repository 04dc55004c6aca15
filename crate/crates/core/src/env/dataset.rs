//! Task and witness persistence: one JSON object per line, stable field
//! order, no volatile fields, so identical inputs serialize byte-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::symbolic::{parse_goal, print_goal};

use super::{Benchmark, Env, EnvError, RawState, Task, Witness};

#[derive(Debug, Serialize, Deserialize)]
struct TaskRecord {
    id: String,
    benchmark: Benchmark,
    instruction: String,
    initial: RawState,
    /// Goal text in the domain syntax. Present in the file for replay and
    /// inspection; learner code only ever sees it through the reward channel.
    sealed_goal: String,
}

/// Writes tasks as JSON lines.
pub fn write_tasks(path: &Path, tasks: &[Task]) -> Result<(), EnvError> {
    let mut out = String::new();
    for task in tasks {
        let record = TaskRecord {
            id: task.id.clone(),
            benchmark: task.benchmark,
            instruction: task.instruction.clone(),
            initial: task.initial.clone(),
            sealed_goal: print_goal(task.sealed_goal()),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads tasks, re-validating state invariants and goal text against the
/// world's vocabulary.
pub fn load_tasks(path: &Path, env: &Env) -> Result<Vec<Task>, EnvError> {
    let text = std::fs::read_to_string(path)?;
    let mut tasks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord =
            serde_json::from_str(line).map_err(|e| EnvError::Record(lineno + 1, e))?;
        record.initial.check_invariants()?;
        // Surface unknown kinds now rather than on first use.
        env.abstract_state(&record.initial)?;
        let goal = parse_goal(&record.sealed_goal, env.vocabulary())?;
        tasks.push(Task::new(
            record.id,
            record.instruction,
            record.benchmark,
            record.initial,
            goal,
        ));
    }
    Ok(tasks)
}

/// Writes witnesses as JSON lines (the sidecar next to a task file).
pub fn write_witnesses(path: &Path, witnesses: &[Witness]) -> Result<(), EnvError> {
    let mut out = String::new();
    for w in witnesses {
        out.push_str(&serde_json::to_string(w).expect("witness serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_witnesses(path: &Path) -> Result<Vec<Witness>, EnvError> {
    let text = std::fs::read_to_string(path)?;
    let mut witnesses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: Witness =
            serde_json::from_str(line).map_err(|e| EnvError::Record(lineno + 1, e))?;
        witnesses.push(w);
    }
    Ok(witnesses)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_benchmark, EnvConfig, GeneratorConfig};
    use super::*;

    #[test]
    fn tasks_and_witnesses_round_trip_through_jsonl() {
        let cfg = GeneratorConfig {
            benchmark: Benchmark::Compositional,
            count: 5,
            seed: 9,
            env: EnvConfig::desk(),
        };
        let (tasks, witnesses) = generate_benchmark(&cfg).unwrap();
        let env = Env::new(cfg.env.clone());
        let dir = tempfile::tempdir().unwrap();
        let task_path = dir.path().join("tasks.jsonl");
        let witness_path = dir.path().join("witnesses.jsonl");

        write_tasks(&task_path, &tasks).unwrap();
        write_witnesses(&witness_path, &witnesses).unwrap();
        let tasks2 = load_tasks(&task_path, &env).unwrap();
        let witnesses2 = load_witnesses(&witness_path).unwrap();
        assert_eq!(tasks, tasks2);
        assert_eq!(witnesses, witnesses2);

        // Serialization is byte-stable.
        write_tasks(&witness_path, &tasks2).unwrap();
        assert_eq!(
            std::fs::read(&task_path).unwrap(),
            std::fs::read(&witness_path).unwrap()
        );
    }

    #[test]
    fn loading_rejects_corrupt_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\": \"x\"}\n").unwrap();
        let env = Env::new(EnvConfig::desk());
        let err = load_tasks(&path, &env).unwrap_err();
        assert!(matches!(err, EnvError::Record(1, _)), "{err}");
    }
}
