//! The two bundled 4-state binary-output HMMs used by the reproduction presets.

use crate::hmm::{AbSpec, HmmModel};
use crate::io::parse_model;

pub const EXAMPLE1_HMM: &str = include_str!("../models/example1.hmm");
pub const EXAMPLE2_HMM: &str = include_str!("../models/example2.hmm");

pub fn example1() -> HmmModel {
    parse_model(EXAMPLE1_HMM).expect("bundled example 1 is valid")
}

pub fn example2() -> HmmModel {
    parse_model(EXAMPLE2_HMM).expect("bundled example 2 is valid")
}

/// Model by number (1 or 2).
pub fn by_number(k: u32) -> Option<HmmModel> {
    match k {
        1 => Some(example1()),
        2 => Some(example2()),
        _ => None,
    }
}

const B: [[f64; 2]; 4] = [[0.3, 0.7], [0.4, 0.6], [0.9, 0.1], [0.7, 0.3]];

fn spec(a: [[f64; 4]; 4]) -> AbSpec {
    let a = nalgebra::DMatrix::from_fn(4, 4, |i, j| a[i][j]);
    let b = nalgebra::DMatrix::from_fn(4, 2, |i, j| B[i][j]);
    AbSpec::new(a, b).expect("example matrices are stochastic")
}

pub fn example1_ab() -> AbSpec {
    spec([
        [0.3, 0.15, 0.1, 0.45],
        [0.1, 0.5, 0.2, 0.2],
        [0.25, 0.15, 0.35, 0.25],
        [0.2, 0.35, 0.4, 0.05],
    ])
}

pub fn example2_ab() -> AbSpec {
    let third = 1.0 / 3.0;
    spec([
        [0.125, 0.3, 0.025, 0.55],
        [0.4, 0.4, 0.025, 0.175],
        [third, third, 0.0, third],
        [0.2, 0.5, 0.025, 0.275],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::model_from_ab;

    #[test]
    fn files_match_literal_matrices() {
        for (file, ab) in [(example1(), example1_ab()), (example2(), example2_ab())] {
            let direct = model_from_ab(&ab).unwrap();
            assert!((file.concat() - direct.concat()).amax() <= 1e-16);
            assert!((file.pi() - direct.pi()).amax() <= 1e-15);
        }
        assert!(by_number(3).is_none());
    }
}
