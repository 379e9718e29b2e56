//! Synthetic environments. All generators are pure functions of their
//! arguments and seed.

pub mod arjovsky;
pub mod data;
pub mod masked;
pub mod sem;
pub mod transforms;

use std::io::Write;

pub use arjovsky::{arjovsky_representation, gen_arjovsky};
pub use data::{EnvironmentData, Latents, Split, Task};
pub use masked::{apply_masked_representation, mask_radius, MaskedData};
pub use sem::{gen_sem, invariant_projection, SemEnvironment, SemSpec};
pub use transforms::{rotation_matrix, scramble, shuffle_spurious};
pub use unit_tests::{gen_unit_test, gen_unit_test_unshuffled, Example, UnitTestConfig};

/// Writes `env,split,y,x0,...` rows. Multi-column targets are written as
/// the index of the largest entry.
pub fn write_csv<W: Write>(out: &mut W, sets: &[(usize, Split, &EnvironmentData)]) -> std::io::Result<()> {
    let d = sets.first().map_or(0, |(_, _, s)| s.d_x());
    let header: Vec<String> = ["env", "split", "y"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|j| format!("x{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (env, split, data) in sets {
        for i in 0..data.n() {
            let y = if data.d_y() == 1 {
                data.y[(i, 0)]
            } else {
                data.y.row(i).transpose().imax() as f64
            };
            write!(out, "{env},{split},{y}")?;
            for v in data.x.row(i).iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmath::Matrix;

    #[test]
    fn csv_layout() {
        let d = EnvironmentData::new(
            Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]),
            Matrix::from_row_slice(2, 1, &[1.0, -1.0]),
            Task::BinaryPm1,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[(0, Split::Train, &d)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "env,split,y,x0,x1\n0,train,1,1,2\n0,train,-1,3,4.5\n"
        );
    }
}
