//! Checkpoints and evaluation at a different item count.

use serde::{Deserialize, Serialize};

use crate::baselines::Algorithm;
use crate::einet::io::ParamDocument;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::ismdp::EnvDescriptor;
use crate::learner::{architecture_for, Agent, CascadedQ, Network};
use crate::math::{AdamState, SeededRng};
use crate::verification::ei_deviation;

use super::eval::{evaluate, EvalReport};

/// Random states per phase for the EI check on a rebuilt network.
pub const TRANSFER_EI_STATES: usize = 50;

/// Parameter document for a weight-shared agent. Dense agents are bound to
/// their training `N` and have no checkpoint format.
pub fn checkpoint(agent: &Agent, env: &EnvConfig) -> Result<ParamDocument> {
    let sets = agent.q.shared_sets().ok_or_else(|| not_transferable(agent.algorithm))?;
    let mut doc = ParamDocument::from_sets(&sets, agent.q.phase_map())?;
    doc.env = Some(serde_json::to_value(env)?);
    doc.algorithm = Some(agent.algorithm.name().to_string());
    Ok(doc)
}

/// The environment embedded in a checkpoint, if any.
pub fn checkpoint_env(doc: &ParamDocument) -> Result<Option<EnvConfig>> {
    doc.env
        .as_ref()
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string())))
        .transpose()
}

/// Agent holding the document's parameters. Documents without an algorithm
/// name load as ISQ.
pub fn agent_from_document(doc: &ParamDocument) -> Result<Agent> {
    let algorithm = match &doc.algorithm {
        Some(name) => Algorithm::parse(name)?,
        None => Algorithm::Isq,
    };
    let (sets, map) = doc.to_sets()?;
    let commands = doc.commands;
    let k = map.len();
    let nets = sets.into_iter().map(Network::Shared).collect();
    Ok(Agent {
        algorithm,
        q: CascadedQ::new(nets, map, AdamState::DEFAULT_LR)?,
        k,
        commands,
    })
}

fn not_transferable(algorithm: Algorithm) -> Error {
    Error::Config(format!(
        "{} uses dense parameters bound to the training item count; they are not transferable",
        algorithm.name()
    ))
}

/// Same scalars, networks rebuilt for `desc`. Fails for dense agents and for
/// item, command or context shapes the parameters were not built for.
pub fn rebuild_for(agent: &Agent, desc: &EnvDescriptor) -> Result<Agent> {
    let sets = agent.q.shared_sets().ok_or_else(|| not_transferable(agent.algorithm))?;
    let arch = sets[0].arch();
    let want = architecture_for(desc, arch.channels, arch.layers, arch.activation, arch.local_only)?;
    if &want != arch {
        return Err(Error::Config(format!(
            "parameters expect item width {}, {} commands and context {:?}; environment has {}, {} and {:?}",
            arch.item_width(),
            arch.commands,
            arch.context_width(),
            desc.item_width,
            desc.commands,
            (desc.n_context > 0).then_some(desc.context_width)
        )));
    }
    if desc.k_select != agent.k || desc.n_items < agent.k {
        return Err(Error::Config(format!(
            "parameters select K={} items; environment has K={} of N={}",
            agent.k, desc.k_select, desc.n_items
        )));
    }
    Ok(agent.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub n_train: usize,
    pub n_test: usize,
    pub param_count_train: usize,
    pub param_count_test: usize,
    /// Largest EI deviation of the rebuilt networks over random states at
    /// every phase of the test shape.
    pub ei_deviation: f64,
    pub eval: EvalReport,
}

/// Evaluates `agent`, trained on `env`, at `n_test` items.
pub fn transfer_evaluate(
    agent: &Agent,
    env: &EnvConfig,
    n_test: usize,
    episodes: usize,
    episode_len: u64,
    seed: u64,
) -> Result<TransferReport> {
    let n_train = env.descriptor()?.n_items;
    let test_env = env.with_items(n_test);
    let desc = test_env.descriptor()?;
    let rebuilt = rebuild_for(agent, &desc)?;
    let mut rng = SeededRng::with_stream(seed, 7);
    let mut worst = 0.0f64;
    for phase in 0..rebuilt.k {
        let theta = rebuilt.q.net(phase).as_shared().expect("rebuilt agents are shared");
        let dev = ei_deviation(theta, phase, n_test - phase, desc.n_context, TRANSFER_EI_STATES, &mut rng)?;
        worst = worst.max(dev);
    }
    let mut env_te = test_env.build(seed)?;
    let eval = evaluate(&rebuilt, env_te.as_mut(), episodes, episode_len, seed)?;
    Ok(TransferReport {
        n_train,
        n_test,
        param_count_train: agent.q.param_count(),
        param_count_test: rebuilt.q.param_count(),
        ei_deviation: worst,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::CircleConfig;
    use crate::learner::{sharing_groups, SharingMode};
    use crate::einet::Activation;

    fn agent(alg: Algorithm, env: &EnvConfig) -> Agent {
        let desc = env.descriptor().unwrap();
        let mode = SharingMode::I;
        assert_eq!(sharing_groups(&mode, 0, desc.k_select).len(), desc.k_select);
        Agent::init(alg, &desc, &mode, 4, 3, Activation::Relu, 1e-3, &mut SeededRng::new(5)).unwrap()
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = EnvConfig::Circles(CircleConfig::new(5, 1, 2, 5));
        let a = agent(Algorithm::Isq, &env);
        let doc = checkpoint(&a, &env).unwrap();
        let back = ParamDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(checkpoint_env(&back).unwrap(), Some(env));
        let b = agent_from_document(&back).unwrap();
        assert_eq!(b.q.sets(), a.q.sets());
        assert_eq!(b.q.phase_map(), a.q.phase_map());
        assert_eq!((b.algorithm, b.k, b.commands), (a.algorithm, a.k, a.commands));
    }

    #[test]
    fn same_n_matches_evaluate() {
        let env = EnvConfig::Circles(CircleConfig::new(5, 1, 1, 1));
        let a = agent(Algorithm::Isq, &env);
        let t = transfer_evaluate(&a, &env, 5, 2, 30, 11).unwrap();
        let direct = evaluate(&a, env.build(11).unwrap().as_mut(), 2, 30, 11).unwrap();
        assert_eq!(t.eval, direct);
        assert_eq!(t.param_count_train, t.param_count_test);
    }

    #[test]
    fn larger_n_keeps_params_and_ei() {
        let env = EnvConfig::Circles(CircleConfig::new(5, 1, 2, 5));
        let a = agent(Algorithm::Isq, &env);
        let t = transfer_evaluate(&a, &env, 20, 2, 10, 3).unwrap();
        assert_eq!((t.n_train, t.n_test), (5, 20));
        assert_eq!(t.param_count_train, t.param_count_test);
        assert!(t.ei_deviation <= 1e-10, "{}", t.ei_deviation);
        assert_eq!(t.eval.samples.len(), 2);
    }

    #[test]
    fn dense_and_mismatched_shapes_rejected() {
        let env = EnvConfig::Circles(CircleConfig::new(5, 1, 1, 1));
        let dense = agent(Algorithm::VanillaDqn, &env);
        assert!(matches!(checkpoint(&dense, &env), Err(Error::Config(_))));
        assert!(matches!(transfer_evaluate(&dense, &env, 8, 1, 5, 0), Err(Error::Config(_))));
        let a = agent(Algorithm::Isq, &env);
        let other = EnvConfig::Circles(CircleConfig::new(5, 1, 1, 5)).descriptor().unwrap();
        assert!(rebuild_for(&a, &other).is_err());
    }
}
