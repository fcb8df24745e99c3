//! Catalogue of differentiable ops, each as a scalar objective over random
//! inputs of fixed shapes.

use tsgf::Tensor;

use super::weighted_sum;

pub type Objective = Box<dyn Fn(&[Tensor]) -> Tensor>;

pub struct OpCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    /// Inputs drawn from [0.2, 2) instead of ±[0.1, 1).
    pub positive: bool,
    pub objective: Objective,
    /// Distance of the inputs from the nearest point where the objective is
    /// not differentiable, for composites whose kinks the input sampler
    /// cannot steer clear of.
    pub kink_distance: Option<fn(&[Tensor]) -> f64>,
}

fn case(name: &'static str, shapes: &[&[usize]], positive: bool, objective: Objective) -> OpCase {
    OpCase { name, shapes: shapes.iter().map(|s| s.to_vec()).collect(), positive, objective, kink_distance: None }
}

/// Pre-activation of the composite network below: conv then batch norm.
fn composite_pre_relu(t: &[Tensor]) -> Tensor {
    let h = t[0].conv3d(&t[1], None, [1, 1, 1], [1, 1, 1]).unwrap();
    let (m, v) = (h.channel_mean().unwrap(), h.channel_var().unwrap());
    h.channel_norm(&m, &v, &t[2], &t[3], 1e-5).unwrap()
}

pub fn catalogue() -> Vec<OpCase> {
    vec![
        case("add", &[&[2, 3], &[2, 3]], false, Box::new(|t| weighted_sum(&t[0].add(&t[1]).unwrap(), 1))),
        case("sub", &[&[4], &[4]], false, Box::new(|t| weighted_sum(&t[0].sub(&t[1]).unwrap(), 2))),
        case("mul", &[&[3, 2], &[3, 2]], false, Box::new(|t| weighted_sum(&t[0].mul(&t[1]).unwrap(), 3))),
        case("add_scalar", &[&[5]], false, Box::new(|t| weighted_sum(&t[0].add_scalar(0.7), 4))),
        case("mul_scalar", &[&[5]], false, Box::new(|t| weighted_sum(&t[0].mul_scalar(-1.3), 5))),
        case("matmul", &[&[3, 4], &[4, 2]], false, Box::new(|t| weighted_sum(&t[0].matmul(&t[1]).unwrap(), 6))),
        case("linear", &[&[3, 4], &[5, 4], &[5]], false, Box::new(|t| weighted_sum(&t[0].linear(&t[1], &t[2]).unwrap(), 7))),
        case(
            "conv3d",
            &[&[2, 2, 3, 4, 4], &[3, 2, 2, 3, 3], &[3]],
            false,
            Box::new(|t| weighted_sum(&t[0].conv3d(&t[1], Some(&t[2]), [1, 2, 1], [1, 1, 0]).unwrap(), 8)),
        ),
        case(
            "conv3d_frame",
            &[&[1, 1, 2, 3, 3], &[2, 1, 1, 3, 3]],
            false,
            Box::new(|t| weighted_sum(&t[0].conv3d(&t[1], None, [1, 1, 1], [0, 1, 1]).unwrap(), 9)),
        ),
        case("avg_pool3d", &[&[2, 2, 4, 4, 5]], false, Box::new(|t| weighted_sum(&t[0].avg_pool3d([2, 2, 2]).unwrap(), 10))),
        case("relu", &[&[6]], false, Box::new(|t| weighted_sum(&t[0].relu(), 11))),
        case("sigmoid", &[&[6]], false, Box::new(|t| weighted_sum(&t[0].sigmoid(), 12))),
        case("tanh", &[&[6]], false, Box::new(|t| weighted_sum(&t[0].tanh(), 13))),
        case("exp", &[&[6]], false, Box::new(|t| weighted_sum(&t[0].exp(), 14))),
        case("log", &[&[6]], true, Box::new(|t| weighted_sum(&t[0].ln(), 15))),
        case("abs", &[&[6]], false, Box::new(|t| weighted_sum(&t[0].abs(), 16))),
        case("sum", &[&[2, 3]], false, Box::new(|t| t[0].square().sum())),
        case("mean", &[&[2, 3]], false, Box::new(|t| t[0].square().mean())),
        case("l2_norm", &[&[7]], false, Box::new(|t| t[0].l2_norm())),
        case("mean_axis", &[&[2, 3, 4]], false, Box::new(|t| weighted_sum(&t[0].mean_axis(1).unwrap(), 17))),
        case("softmax", &[&[3, 4]], false, Box::new(|t| weighted_sum(&t[0].softmax(), 18))),
        case("log_softmax", &[&[3, 4]], false, Box::new(|t| weighted_sum(&t[0].log_softmax(), 19))),
        case("reshape", &[&[2, 6]], false, Box::new(|t| weighted_sum(&t[0].reshape(vec![3, 4]).unwrap(), 20))),
        case("flatten", &[&[2, 3, 2]], false, Box::new(|t| weighted_sum(&t[0].flatten().unwrap(), 21))),
        case("permute", &[&[2, 3, 4]], false, Box::new(|t| weighted_sum(&t[0].permute(&[1, 2, 0]).unwrap(), 22))),
        case("select", &[&[2, 3, 4]], false, Box::new(|t| weighted_sum(&t[0].select(1, 2).unwrap(), 23))),
        case("channel_mean", &[&[3, 2, 4]], false, Box::new(|t| weighted_sum(&t[0].channel_mean().unwrap(), 24))),
        case("channel_var", &[&[3, 2, 4]], false, Box::new(|t| weighted_sum(&t[0].channel_var().unwrap(), 25))),
        // batch norm with batch statistics, plus a statistic-matching term
        case(
            "batch_norm",
            &[&[3, 2, 2, 2, 2], &[2], &[2]],
            false,
            Box::new(|t| {
                let (m, v) = (t[0].channel_mean().unwrap(), t[0].channel_var().unwrap());
                let y = t[0].channel_norm(&m, &v, &t[1], &t[2], 1e-5).unwrap();
                let target = Tensor::full(vec![2], 0.3);
                weighted_sum(&y, 26).add(&m.sub(&target).unwrap().l2_norm()).unwrap()
            }),
        ),
        // conv -> bn -> relu -> pool -> flatten -> linear -> cross-entropy
        OpCase {
            kink_distance: Some(|t| composite_pre_relu(t).data().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))),
            ..case(
                "composite",
                &[&[2, 1, 2, 4, 4], &[2, 1, 2, 3, 3], &[2], &[2], &[3, 2 * 3 * 2 * 2]],
                false,
                Box::new(|t| {
                    let h = composite_pre_relu(t).relu();
                    let h = h.avg_pool3d([1, 2, 2]).unwrap().flatten().unwrap();
                    let bias = Tensor::zeros(vec![3]);
                    let logits = h.linear(&t[4], &bias).unwrap();
                    let onehot = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
                    logits.log_softmax().mul(&onehot).unwrap().sum().mul_scalar(-0.5)
                }),
            )
        },
    ]
}
