#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use weaktrace::network::{compile, Network, NetworkBuilder};
use weaktrace::tsvf::{forward_state, Postselection, Preselection};

#[derive(Debug, Clone)]
pub enum Op {
    Splitter { i: usize, j: usize, theta: f64 },
    Phase { i: usize, phi: f64 },
}

/// A random block-free network: one source on mode 0, a splitter chain
/// touching every mode, then random splitters and phase shifters, and a
/// detector `D{i}` per mode.
#[derive(Debug, Clone)]
pub struct Random {
    pub modes: usize,
    pub chain: Vec<f64>,
    pub ops: Vec<Op>,
}

fn op(n: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..n, 0..n - 1, 0.0..=FRAC_PI_2).prop_map(move |(i, d, theta)| Op::Splitter {
            i,
            j: (i + 1 + d) % n,
            theta
        }),
        (0..n, -PI..PI).prop_map(|(i, phi)| Op::Phase { i, phi }),
    ]
}

pub fn random() -> impl Strategy<Value = Random> {
    (2usize..=4).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.0..=FRAC_PI_2, n - 1),
            prop::collection::vec(op(n), 0..6),
        )
            .prop_map(|(modes, chain, ops)| Random { modes, chain, ops })
    })
}

impl Random {
    pub fn network(&self) -> Network {
        let n = self.modes;
        let mut cur: Vec<String> = (0..n)
            .map(|i| if i == 0 { "m0_0".to_string() } else { format!("v{i}") })
            .collect();
        let mut version = vec![0usize; n];
        let mut next = |i: usize, cur: &mut Vec<String>| {
            version[i] += 1;
            cur[i] = format!("m{i}_{}", version[i]);
            cur[i].clone()
        };
        let mut b = NetworkBuilder::new().source("S", "m0_0");
        let mut k = 0;
        let splitters = self
            .chain
            .iter()
            .enumerate()
            .map(|(i, &theta)| Op::Splitter { i, j: i + 1, theta })
            .chain(self.ops.iter().cloned());
        for o in splitters {
            k += 1;
            match o {
                Op::Splitter { i, j, theta } => {
                    let (ai, aj) = (cur[i].clone(), cur[j].clone());
                    let (oi, oj) = (next(i, &mut cur), next(j, &mut cur));
                    b = b.splitter(&format!("BS{k}"), theta.cos(), theta.sin(), [&ai, &aj], [&oi, &oj]);
                }
                Op::Phase { i, phi } => {
                    let a = cur[i].clone();
                    let o = next(i, &mut cur);
                    b = b.phase(&format!("PS{k}"), phi, &a, &o);
                }
            }
        }
        for (i, a) in cur.iter().enumerate() {
            b = b.detector(&format!("D{i}"), a);
        }
        b.build().expect("random network is valid")
    }
}

pub fn source(n: &Network) -> Preselection {
    Preselection::source(n, "S").unwrap()
}

/// Detector probabilities `(name, p)` in detector order.
pub fn detector_probabilities(n: &Network) -> Vec<(String, f64)> {
    let plan = compile(n).unwrap();
    let last = plan.detector_cut().name.clone();
    let f = forward_state(&plan, &source(n), &last).unwrap();
    n.detectors()
        .map(|d| {
            let arm = n.detector_arm(&d.name).unwrap();
            (d.name.clone(), f.amp(arm).unwrap().norm_sqr())
        })
        .collect()
}

/// Post-selection on the detector most likely to fire.
pub fn likeliest(n: &Network) -> Postselection {
    let probs = detector_probabilities(n);
    let (best, _) = probs
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("a detector");
    Postselection::detector(n, best).unwrap()
}
