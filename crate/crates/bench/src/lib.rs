//! Fixtures shared by the benchmarks.

use mel_core::ensemble::build_ensemble;
use mel_core::failover::{
    ClusterScenario, FailureTrace, LatencyModel, PartId, PlacementPolicy, PlacementSource, Requests, ServerSpec,
};
use mel_core::theory::random_instance;
use mel_core::theory::{FiniteLearningProblem, StochasticLearner};
use mel_core::{DenseArray, EnsembleModel, EnsembleSpec, SubsetId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two upstreams of width 32 over 16 inputs, 16 classes, and a batch of 64.
pub fn ensemble_and_batch() -> (EnsembleModel, DenseArray) {
    let spec = EnsembleSpec::symmetric(2, 16, &[32, 32], &[32], |_| 16);
    let model = build_ensemble(&spec, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DenseArray::matrix(64, 16, (0..64 * 16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    (model, x)
}

/// A deterministic batch of random finite learning problems.
pub fn theory_instances(count: usize) -> Vec<(FiniteLearningProblem, StochasticLearner)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count).map(|_| random_instance(&mut rng)).collect()
}

/// Three servers, a periodic combiner outage, and one request per ms.
pub fn busy_scenario(horizon_ms: u64) -> ClusterScenario {
    let full: SubsetId = "{1,2}".parse().unwrap();
    let mut windows = std::collections::BTreeMap::new();
    windows.insert(
        "s3".to_string(),
        (0..horizon_ms / 1000).map(|k| (k * 1000 + 200, Some(k * 1000 + 600))).collect::<Vec<_>>(),
    );
    ClusterScenario {
        servers: ["s1", "s2", "s3"]
            .into_iter()
            .map(|id| ServerSpec { id: id.into(), capacity: 100, compute_rate: 1.0 })
            .collect(),
        upstream_blocks: vec![2, 2],
        placement: PlacementSource::Explicit(
            [(PartId::Upstream(1), "s1"), (PartId::Upstream(2), "s2"), (PartId::Downstream(full.clone()), "s3")]
                .into_iter()
                .map(|(p, h)| (p, h.to_string()))
                .collect(),
        ),
        demands: Default::default(),
        policy: PlacementPolicy::BestFit,
        latency: LatencyModel {
            upstream_work: vec![4.0, 4.0],
            exit_work: vec![0.5, 0.5],
            downstream_work: [(full, 1.0)].into(),
            rep_size: vec![2.0, 2.0],
            stage_work: vec![],
            stage_output_size: vec![],
            bandwidth: 1.0,
            rtt_ms: 0.5,
            retry_penalty_ms: 1.0,
        },
        trace: FailureTrace::from_down_windows(&windows, 10, 3).unwrap(),
        requests: Requests::Periodic { start_ms: 0, end_ms: horizon_ms, every_ms: 1 },
    }
}
