//! Fixture datasets: the two-moons generator and a small CSV loader.

use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::net::Sample;

/// Two interleaving half-circles with Gaussian noise. The first
/// `ceil(n/2)` points are class 0 on the upper arc, the rest class 1 on
/// the lower arc; deterministic under `seed`.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).unwrap();
    let n0 = n.div_ceil(2);
    let n1 = n - n0;
    let mut samples = Vec::with_capacity(n);
    let arc = |count: usize, k: usize| {
        if count <= 1 {
            0.0
        } else {
            std::f64::consts::PI * k as f64 / (count - 1) as f64
        }
    };
    for k in 0..n0 {
        let t = arc(n0, k);
        samples.push(Sample {
            x0: vec![
                t.cos() + normal.sample(&mut rng),
                t.sin() + normal.sample(&mut rng),
            ],
            label: 0,
        });
    }
    for k in 0..n1 {
        let t = arc(n1, k);
        samples.push(Sample {
            x0: vec![
                1.0 - t.cos() + normal.sample(&mut rng),
                1.0 - t.sin() - 0.5 + normal.sample(&mut rng),
            ],
            label: 1,
        });
    }
    samples
}

/// Load `f1,...,fk,label` rows. Blank lines are skipped; a first line
/// whose cells are not all numeric is treated as a header. Labels must be
/// nonnegative integers.
pub fn load_csv(text: &str) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(Error::MalformedCsv {
                line,
                reason: "need at least one feature and a label".into(),
            });
        }
        let numeric = cells.iter().all(|c| c.parse::<f64>().is_ok());
        if !numeric {
            if samples.is_empty() && width.is_none() {
                continue; // header
            }
            let bad = cells.iter().find(|c| c.parse::<f64>().is_err()).unwrap();
            return Err(Error::MalformedCsv {
                line,
                reason: format!("non-numeric cell {bad:?}"),
            });
        }
        if *width.get_or_insert(cells.len()) != cells.len() {
            return Err(Error::MalformedCsv {
                line,
                reason: format!("{} cells, expected {}", cells.len(), width.unwrap()),
            });
        }
        let label_cell = cells[cells.len() - 1];
        let label_val: f64 = label_cell.parse().unwrap();
        if label_val < 0.0 || label_val.fract() != 0.0 {
            return Err(Error::MalformedCsv {
                line,
                reason: format!("label {label_cell:?} is not a nonnegative integer"),
            });
        }
        samples.push(Sample {
            x0: cells[..cells.len() - 1]
                .iter()
                .map(|c| c.parse().unwrap())
                .collect(),
            label: label_val as usize,
        });
    }
    if samples.is_empty() {
        return Err(Error::MalformedCsv {
            line: text.lines().count().max(1),
            reason: "no data rows".into(),
        });
    }
    Ok(samples)
}

/// Number of classes implied by a sample set (max label + 1).
pub fn num_classes(samples: &[Sample]) -> usize {
    samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
}

pub fn features(sample: &Sample) -> Array1<f64> {
    Array1::from(sample.x0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_labels_by_construction_order() {
        let s = two_moons(4, 0.1, 0);
        assert_eq!(s.len(), 4);
        assert_eq!(
            s.iter().map(|p| p.label).collect::<Vec<_>>(),
            vec![0, 0, 1, 1]
        );
        for p in &s {
            assert_eq!(p.x0.len(), 2);
        }
    }

    #[test]
    fn moons_deterministic_and_seed_sensitive() {
        let a = two_moons(50, 0.1, 7);
        let b = two_moons(50, 0.1, 7);
        let c = two_moons(50, 0.1, 8);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.x0, q.x0);
            assert_eq!(p.label, q.label);
        }
        assert!(a.iter().zip(&c).any(|(p, q)| p.x0 != q.x0));
    }

    #[test]
    fn moons_noiseless_points_lie_on_arcs() {
        let s = two_moons(40, 0.0, 3);
        for p in s {
            let (x, y) = (p.x0[0], p.x0[1]);
            let r = if p.label == 0 {
                (x * x + y * y).sqrt()
            } else {
                ((x - 1.0) * (x - 1.0) + (y + 0.5 - 1.0) * (y + 0.5 - 1.0)).sqrt()
            };
            assert!((r - 1.0).abs() < 1e-12, "off-arc point {x}, {y}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let text = "x1,x2,label\n0.5, 1.5, 0\n-1.0,2.0,1\n";
        let s = load_csv(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].x0, vec![0.5, 1.5]);
        assert_eq!(s[1].label, 1);
        assert_eq!(num_classes(&s), 2);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = load_csv("1.0,2.0,0\n1.0,oops,1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedCsv { line: 2, .. }));

        let err = load_csv("1.0,2.0,0\n1.0,1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedCsv { line: 2, .. }));

        let err = load_csv("1.0,2.0,0.5\n").unwrap_err();
        assert!(matches!(err, Error::MalformedCsv { line: 1, .. }));

        assert!(load_csv("header,only\n").is_err());
    }

    #[test]
    fn iris_like_schema_loads() {
        let text = "5.1,3.5,1.4,0.2,0\n7.0,3.2,4.7,1.4,1\n6.3,3.3,6.0,2.5,2\n";
        let s = load_csv(text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[2].x0.len(), 4);
        assert_eq!(num_classes(&s), 3);
    }
}
