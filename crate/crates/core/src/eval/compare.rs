use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport};
use super::oracle::{train_oracle, OracleClassifier, OracleConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::training::{train, Observer, TrainConfig, TrainState};

/// FNV-1a over the debug rendering of a training configuration.
pub fn config_digest(config: &TrainConfig) -> String {
    let text = format!("{config:?}");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub name: String,
    /// Narrowed minus full edit success towards 1.
    pub success_to_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub group: String,
    pub full: EvalReport,
    pub narrowed: EvalReport,
    pub full_train_count: usize,
    pub narrowed_train_count: usize,
    pub deltas: Vec<GroupDelta>,
    /// Mean edit success towards 1 over the group, per arm.
    pub full_group_success: f64,
    pub narrowed_group_success: f64,
}

/// The two trained arms, kept for inspection.
pub struct ComparisonRun {
    pub comparison: Comparison,
    pub full_state: TrainState<f32>,
    pub narrowed_state: TrainState<f32>,
    pub oracle: OracleClassifier,
}

/// Trains one model on the training split of `full` and one on that split
/// narrowed to items with a `group` attribute, with the same configuration,
/// and evaluates both on the same held-out split of `full`.
pub fn compare_full_vs_narrowed(
    config: &TrainConfig,
    full: &Dataset,
    group: &str,
    oracle_config: &OracleConfig,
    observer: &mut dyn Observer<f32>,
) -> Result<ComparisonRun> {
    let members: Vec<String> = full
        .schema()
        .group_indices(group)?
        .into_iter()
        .map(|i| full.schema().names()[i].clone())
        .collect();
    let (train_full, test) = full.split(config.test_fraction, config.seed)?;
    let train_narrow = train_full.narrow(group)?;
    let oracle = train_oracle(&train_full, oracle_config, config.seed)?;

    let full_state = train(config, &train_full, observer)?;
    let narrowed_state = train(config, &train_narrow, observer)?;
    let same_budget = full_state.step == narrowed_state.step
        && full_state.dc_updates == narrowed_state.dc_updates
        && full_state.generator_phases == narrowed_state.generator_phases
        && full_state.seed == narrowed_state.seed;
    if !same_budget || full_state.step != config.total_steps {
        return Err(Error::Config(format!(
            "comparison arms ran unequal budgets: {}/{}/{} vs {}/{}/{}",
            full_state.step,
            full_state.dc_updates,
            full_state.generator_phases,
            narrowed_state.step,
            narrowed_state.dc_updates,
            narrowed_state.generator_phases
        )));
    }

    let digest = config_digest(config);
    let full_report = evaluate(&full_state.generator, &oracle, &test, digest.clone())?;
    let narrowed_report = evaluate(&narrowed_state.generator, &oracle, &test, digest)?;
    let mut deltas = Vec::new();
    for name in &members {
        deltas.push(GroupDelta {
            name: name.clone(),
            success_to_one: narrowed_report.attribute(name)?.success_to_one
                - full_report.attribute(name)?.success_to_one,
        });
    }
    let comparison = Comparison {
        group: group.into(),
        full_group_success: full_report.mean_success_to_one(&members)?,
        narrowed_group_success: narrowed_report.mean_success_to_one(&members)?,
        full: full_report,
        narrowed: narrowed_report,
        full_train_count: train_full.len(),
        narrowed_train_count: train_narrow.len(),
        deltas,
    };
    Ok(ComparisonRun {
        comparison,
        full_state,
        narrowed_state,
        oracle,
    })
}
