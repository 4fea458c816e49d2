use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SuccessRow, SuccessTable};
use crate::error::{Error, Result};
use crate::rng::derive_path;
use crate::sim::{
    generate, randomize_scene, record_demo, run_rollout, Category, FailureClass, RolloutOptions, RolloutResult,
    SceneMode, TaskSpec,
};
use crate::store::{Dataset, StoreConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMode {
    /// Fixed task set, growing number of demonstrations per task.
    DatasetSize,
    /// Fixed demonstration budget split over more or fewer tasks.
    Diversity,
    /// One condition in thousand-task scene mode (±45°, sensor noise).
    Thousand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Evaluated on the demonstrated object instances.
    Seen,
    /// Fresh instances of the same families.
    Unseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    /// Task `t` uses family `families[t % len]`.
    pub families: Vec<Category>,
    /// Dataset-size levels; diversity pairs them with `task_counts`.
    pub demos_per_task: Vec<usize>,
    pub task_counts: Vec<usize>,
    /// Diversity mode: every split must use exactly this many demos.
    pub budget: Option<usize>,
    /// Rollouts per task.
    pub repeats: usize,
    /// Unseen tasks per condition; defaults to the seen task count.
    pub unseen_tasks: Option<usize>,
    pub splits: Vec<Split>,
    /// Add one row per family under each split.
    pub per_family: bool,
    pub occlusion: f64,
    pub seed: u64,
    pub rollout: RolloutOptions,
    pub store: StoreConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::DatasetSize,
            families: Category::ALL.to_vec(),
            demos_per_task: vec![1, 3, 10, 50],
            task_counts: vec![6],
            budget: None,
            repeats: 3,
            unseen_tasks: None,
            splits: vec![Split::Seen, Split::Unseen],
            per_family: false,
            occlusion: 0.0,
            seed: 0,
            rollout: RolloutOptions::default(),
            store: StoreConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub tasks: usize,
    pub demos_per_task: usize,
    pub scene_mode: SceneMode,
}

impl ExperimentConfig {
    /// Dataset-size levels {1, 3, 10, 50} over six tasks.
    pub fn dataset_size() -> Self {
        Self::default()
    }

    /// 150 demonstrations as 10×15, 30×5 and 50×3.
    pub fn diversity() -> Self {
        Self {
            mode: ExperimentMode::Diversity,
            demos_per_task: vec![15, 5, 3],
            task_counts: vec![10, 30, 50],
            budget: Some(150),
            ..Self::default()
        }
    }

    pub fn thousand() -> Self {
        Self {
            mode: ExperimentMode::Thousand,
            demos_per_task: vec![5],
            task_counts: vec![180],
            repeats: 1,
            per_family: true,
            ..Self::default()
        }
    }

    /// Checks the configuration and expands it into conditions.
    pub fn conditions(&self) -> Result<Vec<Condition>> {
        let bad = |m: String| Err(Error::Config(m));
        if self.families.is_empty() {
            return bad("families must not be empty".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.splits.is_empty() {
            return bad("splits must not be empty".into());
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return bad(format!("occlusion {} outside [0, 1]", self.occlusion));
        }
        if self.demos_per_task.contains(&0) || self.task_counts.contains(&0) {
            return bad("task and demonstration counts must be positive".into());
        }
        self.store.grid.validate()?;
        let single = |v: &[usize], name: &str| match v {
            [x] => Ok(*x),
            _ => Err(Error::Config(format!("{name} needs exactly one value in this mode, got {v:?}"))),
        };
        let condition = |label: String, tasks, demos, scene_mode| Condition {
            label,
            tasks,
            demos_per_task: demos,
            scene_mode,
        };
        match self.mode {
            ExperimentMode::DatasetSize => {
                let tasks = single(&self.task_counts, "task_counts")?;
                if self.demos_per_task.is_empty() {
                    return bad("demos_per_task must list at least one level".into());
                }
                Ok(self
                    .demos_per_task
                    .iter()
                    .map(|&d| condition(format!("demos-{d}"), tasks, d, SceneMode::Controlled))
                    .collect())
            }
            ExperimentMode::Diversity => {
                let Some(budget) = self.budget else {
                    return bad("diversity mode needs a demonstration budget".into());
                };
                if self.task_counts.is_empty() || self.task_counts.len() != self.demos_per_task.len() {
                    return bad("diversity mode pairs task_counts with demos_per_task one to one".into());
                }
                self.task_counts
                    .iter()
                    .zip(&self.demos_per_task)
                    .map(|(&t, &d)| {
                        if t * d == budget {
                            Ok(condition(format!("{t}x{d}"), t, d, SceneMode::Controlled))
                        } else {
                            Err(Error::Config(format!("infeasible diversity split: {t} tasks x {d} demos != budget {budget}")))
                        }
                    })
                    .collect()
            }
            ExperimentMode::Thousand => Ok(vec![condition(
                "thousand".into(),
                single(&self.task_counts, "task_counts")?,
                single(&self.demos_per_task, "demos_per_task")?,
                SceneMode::Thousand,
            )]),
        }
    }

    fn family(&self, task: usize) -> Category {
        self.families[task % self.families.len()]
    }

    fn instance_seed(&self, split: Split, task: usize) -> u64 {
        let stream = match split {
            Split::Seen => 1,
            Split::Unseen => 2,
        };
        derive_path(self.seed, &[stream, task as u64])
    }

    /// Demo scenes depend only on (task, index), so the datasets of the
    /// dataset-size levels are nested.
    fn demo_scene_seed(&self, task: usize, index: usize) -> u64 {
        derive_path(self.seed, &[3, task as u64, index as u64])
    }

    fn rollout_scene_seed(&self, split: Split, task: usize, repeat: usize) -> u64 {
        let stream = match split {
            Split::Seen => 4,
            Split::Unseen => 5,
        };
        derive_path(self.seed, &[stream, task as u64, repeat as u64])
    }
}

/// One rollout, as written to the JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub condition: String,
    pub split: Split,
    pub task: usize,
    pub repeat: usize,
    pub family: Category,
    pub instance_id: String,
    pub scene_seed: u64,
    pub result: RolloutResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub conditions: Vec<Condition>,
    pub table: SuccessTable,
    pub traces: Vec<TraceRecord>,
}

fn build_dataset(config: &ExperimentConfig, condition: &Condition) -> Result<Dataset> {
    let inputs: Vec<_> = (0..condition.tasks)
        .flat_map(|t| (0..condition.demos_per_task).map(move |d| (t, d)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(t, d)| {
            let family = config.family(t);
            let task = TaskSpec::for_category(family);
            let instance = generate(family, config.instance_seed(Split::Seen, t));
            let scene = randomize_scene(&task, &instance, condition.scene_mode, config.demo_scene_seed(t, d));
            record_demo(&task, &scene, &format!("{family}-t{t:03}-d{d:02}"), &config.rollout.render)
        })
        .collect::<Result<_>>()?;
    let mut dataset = Dataset::new(config.store.clone())?;
    for input in inputs {
        dataset.ingest(input)?;
    }
    Ok(dataset)
}

/// Builds each condition's dataset from simulated demonstrations, runs
/// `repeats` rollouts per task and split, and tabulates the outcomes.
/// Rollouts run on the current rayon pool; results do not depend on its size.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let conditions = config.conditions()?;
    let mut traces = Vec::new();
    for condition in &conditions {
        let dataset = build_dataset(config, condition)?;
        let mut jobs = Vec::new();
        for &split in &config.splits {
            let tasks = match split {
                Split::Seen => condition.tasks,
                Split::Unseen => config.unseen_tasks.unwrap_or(condition.tasks),
            };
            for t in 0..tasks {
                for r in 0..config.repeats {
                    jobs.push((split, t, r));
                }
            }
        }
        let records: Vec<TraceRecord> = jobs
            .into_par_iter()
            .map(|(split, t, r)| {
                let family = config.family(t);
                let task = TaskSpec::for_category(family);
                let instance = generate(family, config.instance_seed(split, t));
                let scene_seed = config.rollout_scene_seed(split, t, r);
                let scene = randomize_scene(&task, &instance, condition.scene_mode, scene_seed)
                    .with_occlusion(config.occlusion);
                Ok(TraceRecord {
                    condition: condition.label.clone(),
                    split,
                    task: t,
                    repeat: r,
                    family,
                    instance_id: instance.instance_id.clone(),
                    scene_seed,
                    result: run_rollout(&dataset, &task, &scene, &config.rollout)?,
                })
            })
            .collect::<Result<_>>()?;
        traces.extend(records);
    }
    let table = table_from_traces(&traces, config.per_family)?;
    Ok(ExperimentOutput {
        config: config.clone(),
        conditions,
        table,
        traces,
    })
}

/// Success rows recomputed from traces: per condition (first-seen order) and
/// split, optionally refined by family.
pub fn table_from_traces(traces: &[TraceRecord], per_family: bool) -> Result<SuccessTable> {
    let mut order: Vec<&str> = Vec::new();
    let mut counts: BTreeMap<(&str, Split, Option<Category>), (u64, u64)> = BTreeMap::new();
    for t in traces {
        if !order.contains(&t.condition.as_str()) {
            order.push(&t.condition);
        }
        let mut bump = |family| {
            let e = counts.entry((t.condition.as_str(), t.split, family)).or_default();
            e.0 += t.result.success as u64;
            e.1 += 1;
        };
        bump(None);
        if per_family {
            bump(Some(t.family));
        }
    }
    let mut rows = Vec::new();
    for cond in order {
        for split in [Split::Seen, Split::Unseen] {
            let families = std::iter::once(None).chain(Category::ALL.into_iter().map(Some));
            for family in families {
                if let Some(&(k, n)) = counts.get(&(cond, split, family)) {
                    let label = match family {
                        None => format!("{cond}/{}", split.as_str()),
                        Some(f) => format!("{cond}/{}/{f}", split.as_str()),
                    };
                    rows.push(SuccessRow::new(label, k, n)?);
                }
            }
        }
    }
    Ok(SuccessTable { rows })
}

/// Failure-class counts per condition, every class listed.
pub fn failure_histogram(traces: &[TraceRecord]) -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut out: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for t in traces {
        let entry = out
            .entry(t.condition.clone())
            .or_insert_with(|| FailureClass::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect());
        *entry.get_mut(t.result.failure_class.as_str()).expect("every class listed") += 1;
    }
    out
}
