//! Every differentiable tensor op checked against central finite differences
//! on 20 random small instances.

mod common;

use common::ops::catalogue;
use common::{max_fd_error, op_inputs, FD_TOL};

const CASES: u64 = 20;

#[test]
fn every_op_matches_finite_differences() {
    let mut failures = Vec::new();
    for op in catalogue() {
        for case in 0..CASES {
            let inputs = op_inputs(&op, 1000 * case + op.name.len() as u64);
            let err = max_fd_error(&inputs, &*op.objective);
            if !(err < FD_TOL) {
                failures.push(format!("{}: case {case} relative error {err:e}", op.name));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn catalogue_covers_the_model_ops() {
    let names: Vec<&str> = catalogue().iter().map(|c| c.name).collect();
    for needed in ["conv3d", "avg_pool3d", "channel_mean", "channel_var", "batch_norm", "linear", "log_softmax", "sigmoid", "tanh", "select"] {
        assert!(names.contains(&needed), "{needed}");
    }
}
