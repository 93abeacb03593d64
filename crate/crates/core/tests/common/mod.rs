#![allow(dead_code)]

use garde_core::providers::{MockProposer, Providers};
use garde_core::synth::{synthesize, PlantedSurge, SynthSpec};
use garde_core::Timeline;

pub fn surge(time: f64, proposal: usize) -> PlantedSurge {
    PlantedSurge {
        time,
        proposal,
        ground_truth: true,
        hold_seconds: 0.0,
    }
}

pub fn synth(spec: SynthSpec) -> (Timeline, Providers) {
    let (timeline, fixture) = synthesize(&spec).unwrap();
    let providers = Providers::mock(spec.embedder_seed, spec.embedding_dim, MockProposer::new(vec![fixture]));
    (timeline, providers)
}

pub fn planted(times: &[f64], noise: f64) -> (Timeline, Providers) {
    synth(SynthSpec {
        noise,
        surges: times.iter().enumerate().map(|(i, &t)| surge(t, i % 2)).collect(),
        ..SynthSpec::default()
    })
}
