//! Builders shared by the integration suites.
#![allow(dead_code)]

use mrs_core::dynamics::{MrsSystem, SelfTerm, Weights};
use mrs_core::forces::{ExternalField, Spring, SpringNetwork, Tether};
use mrs_core::kernels::{Dim, KernelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random system with springs, an optional tether and an optional field.
/// Closed curves are perturbed rings so arclength weights stay positive;
/// otherwise points are uniform in the unit box with fixed weights.
pub fn random_system(seed: u64, dim: Dim, n: usize, closed_curve: bool) -> (MrsSystem, Vec<f64>) {
    let mut rng = rng(seed);
    let d = dim.get();
    let x: Vec<f64> = if closed_curve {
        (0..n)
            .flat_map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let rad = 1.0 + 0.2 * rng.random_range(-1.0..1.0);
                let mut p = vec![rad * th.cos(), rad * th.sin()];
                if d == 3 {
                    p.push(0.1 * rng.random_range(-1.0..1.0));
                }
                p
            })
            .collect()
    } else {
        rand_vec(&mut rng, n * d)
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let ring_edge = closed_curve && (j == i + 1 || (i == 0 && j == n - 1));
            if ring_edge || (!closed_curve && rng.random_bool(0.3)) {
                edges.push(Spring {
                    i,
                    j,
                    stiffness: rng.random_range(0.5..2.0),
                    rest_length: rng.random_range(0.2..1.2),
                });
            }
        }
    }
    let field = match rng.random_range(0..3) {
        0 => ExternalField::None,
        1 => ExternalField::LinearFlow {
            c: (0..d).map(|_| rand_vec(&mut rng, d)).collect(),
        },
        _ => ExternalField::Gravity {
            g: rand_vec(&mut rng, d),
        },
    };
    let tether = rng.random_bool(0.5).then(|| Tether {
        reference: x
            .iter()
            .map(|v| v + 0.1 * rng.random_range(-1.0..1.0))
            .collect(),
        stiffness: rng.random_range(0.0..1.0),
    });
    let weights = if closed_curve {
        Weights::ClosedCurve
    } else {
        Weights::Constant {
            values: (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
        }
    };
    let sys = MrsSystem {
        kernel: KernelParams::new(dim, rng.random_range(0.05..0.4)).unwrap(),
        network: SpringNetwork::new(n, edges).unwrap(),
        tether,
        field,
        weights,
        self_term: if rng.random_bool(0.5) {
            SelfTerm::Include
        } else {
            SelfTerm::Exclude
        },
    };
    sys.validate().unwrap();
    (sys, x)
}

/// Spring network with no kernel coupling of interest: points in a line.
pub fn chain(n: usize, dim: Dim, eps: f64) -> (MrsSystem, Vec<f64>) {
    let d = dim.get();
    let mut x = vec![0.0; n * d];
    for k in 0..n {
        x[k * d] = 0.3 * k as f64;
        x[k * d + 1] = 0.05 * (k as f64).sin();
    }
    let edges = (0..n - 1)
        .map(|i| Spring {
            i,
            j: i + 1,
            stiffness: 1.0,
            rest_length: 0.25,
        })
        .collect();
    let sys = MrsSystem {
        kernel: KernelParams::new(dim, eps).unwrap(),
        network: SpringNetwork::new(n, edges).unwrap(),
        tether: None,
        field: ExternalField::None,
        weights: Weights::Constant {
            values: vec![1.0; n],
        },
        self_term: SelfTerm::Include,
    };
    (sys, x)
}
