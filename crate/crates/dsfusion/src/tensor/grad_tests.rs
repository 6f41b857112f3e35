//! Finite-difference checks for every differentiable op.

use super::gradcheck::{finite_diff, max_discrepancy, ABS_FLOOR, H, REL_TOL};
use super::{Activation, Real, Tensor};

/// Deterministic pseudo-random fill so tests need no RNG plumbing.
fn fill(n: usize, salt: u64) -> Vec<Real> {
    (0..n)
        .map(|i| {
            let x = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(salt);
            let x = (x >> 33) as f64 / (1u64 << 31) as f64;
            (x - 0.5) as Real * 2.0
        })
        .collect()
}

/// Checks d(loss)/d(x) for `loss = f(x)` against central differences,
/// where `x` has the given shape.
fn check_input_grad<F>(shape: &[usize], salt: u64, f: F)
where
    F: Fn(&Tensor) -> Tensor,
{
    let numel: usize = shape.iter().product();
    let x0 = fill(numel, salt);
    let x = Tensor::var(x0.clone(), shape).unwrap();
    let loss = f(&x);
    loss.backward().unwrap();
    let analytic = x.grad().expect("gradient recorded");
    let numeric = finite_diff(
        |vals| {
            let xt = Tensor::from_vec(vals.to_vec(), shape).unwrap();
            f(&xt).item()
        },
        &x0,
        H,
    );
    let worst = max_discrepancy(&analytic, &numeric, ABS_FLOOR);
    assert!(worst < REL_TOL, "worst relative error {worst}");
}

#[test]
fn add_grad() {
    let other = Tensor::from_vec(fill(6, 9), &[6]).unwrap();
    check_input_grad(&[6], 1, |x| {
        x.add(&other).unwrap().mul(&x.add(&other).unwrap()).unwrap().mean()
    });
}

#[test]
fn sub_grad() {
    let other = Tensor::from_vec(fill(6, 10), &[6]).unwrap();
    check_input_grad(&[6], 2, |x| {
        let d = x.sub(&other).unwrap();
        d.mul(&d).unwrap().sum()
    });
}

#[test]
fn mul_both_sides_grad() {
    // y used on both sides of the product
    check_input_grad(&[5], 3, |x| x.mul(x).unwrap().mul(x).unwrap().sum());
}

#[test]
fn neg_scale_add_scalar_grad() {
    check_input_grad(&[7], 4, |x| {
        let y = x.neg().scale(1.7).add_scalar(0.3);
        y.mul(&y).unwrap().mean()
    });
}

#[test]
fn ln_grad() {
    // shift inputs positive for the log domain
    check_input_grad(&[6], 5, |x| x.add_scalar(3.0).ln().sum());
}

#[test]
fn clamp_grad_away_from_boundary() {
    check_input_grad(&[8], 6, |x| {
        let y = x.scale(0.4).clamp(-0.9, 0.9);
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn activation_grads() {
    for (kind, salt) in [
        (Activation::Silu, 20),
        (Activation::Sigmoid, 21),
        (Activation::Tanh, 22),
    ] {
        check_input_grad(&[9], salt, move |x| {
            let y = x.activation(kind);
            y.mul(&y).unwrap().mean()
        });
    }
    // relu checked away from the kink
    check_input_grad(&[9], 23, |x| x.add_scalar(2.0).relu().sum());
}

#[test]
fn silu_grad_tight_tolerance() {
    // analytic silu derivative vs finite differences at 1e-5
    let x0 = fill(16, 31);
    let x = Tensor::var(x0.clone(), &[16]).unwrap();
    let loss = x.silu().sum();
    loss.backward().unwrap();
    let analytic = x.grad().unwrap();
    let numeric = finite_diff(
        |v| {
            Tensor::from_vec(v.to_vec(), &[16]).unwrap().silu().sum().item()
        },
        &x0,
        1e-5,
    );
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!((a - n).abs() < 1e-5, "{a} vs {n}");
    }
}

#[test]
fn sum_mean_reshape_grad() {
    check_input_grad(&[2, 3], 7, |x| {
        let y = x.reshape(&[6]).unwrap();
        y.mul(&y).unwrap().mean()
    });
}

#[test]
fn matmul_grad_both_operands() {
    let b0 = fill(6, 40);
    let b_const = Tensor::from_vec(b0, &[3, 2]).unwrap();
    check_input_grad(&[4, 3], 8, |x| {
        let y = x.matmul(&b_const).unwrap();
        y.mul(&y).unwrap().sum()
    });
    let a0 = fill(12, 41);
    let a_const = Tensor::from_vec(a0, &[4, 3]).unwrap();
    check_input_grad(&[3, 2], 9, |x| {
        let y = a_const.matmul(x).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn conv2d_grad_input_and_kernel() {
    let k0 = fill(2 * 3 * 3 * 3, 50);
    let kernel = Tensor::from_vec(k0, &[2, 3, 3, 3]).unwrap();
    check_input_grad(&[3, 5, 4], 10, |x| {
        let y = x.conv2d(&kernel, 2, 1).unwrap();
        y.mul(&y).unwrap().sum()
    });
    let x0 = fill(3 * 5 * 4, 51);
    let input = Tensor::from_vec(x0, &[3, 5, 4]).unwrap();
    check_input_grad(&[2, 3, 3, 3], 11, |k| {
        let y = input.conv2d(k, 2, 1).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn upsample_grad_matches_finite_diff() {
    check_input_grad(&[2, 3, 3], 12, |x| {
        let y = x.upsample2d(2).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn group_norm_grad_all_inputs() {
    let gamma0 = fill(4, 60).iter().map(|v| v + 1.5).collect::<Vec<_>>();
    let beta0 = fill(4, 61);
    let gamma = Tensor::from_vec(gamma0.clone(), &[4]).unwrap();
    let beta = Tensor::from_vec(beta0.clone(), &[4]).unwrap();
    check_input_grad(&[4, 3, 2], 13, |x| {
        let y = x.group_norm(2, &gamma, &beta).unwrap();
        y.mul(&y).unwrap().sum()
    });
    let x0 = fill(4 * 3 * 2, 62);
    let input = Tensor::from_vec(x0, &[4, 3, 2]).unwrap();
    check_input_grad(&[4], 14, |g| {
        let y = input.group_norm(2, g, &beta).unwrap();
        y.mul(&y).unwrap().sum()
    });
    check_input_grad(&[4], 15, |b| {
        let y = input.group_norm(2, &gamma, b).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn log_softmax_grad() {
    check_input_grad(&[8], 16, |x| {
        let y = x.log_softmax().unwrap();
        // weighted NLL-style loss
        let w = Tensor::from_vec(fill(8, 70), &[8]).unwrap();
        y.mul(&w).unwrap().sum()
    });
}

#[test]
fn concat_grad() {
    let other = Tensor::from_vec(fill(8, 80), &[2, 2, 2]).unwrap();
    check_input_grad(&[2, 2, 2], 17, |x| {
        let y = x.concat_channels(&other).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn channel_ops_grad() {
    let s0 = fill(3, 90).iter().map(|v| v + 2.0).collect::<Vec<_>>();
    let s = Tensor::from_vec(s0, &[3]).unwrap();
    check_input_grad(&[3, 2, 2], 18, |x| {
        let y = x.mul_channel(&s).unwrap().add_channel(&s).unwrap();
        y.mul(&y).unwrap().sum()
    });
    let x0 = fill(12, 91);
    let input = Tensor::from_vec(x0, &[3, 2, 2]).unwrap();
    check_input_grad(&[3], 19, |s| {
        let y = input.mul_channel(s).unwrap();
        y.mul(&y).unwrap().sum()
    });
    check_input_grad(&[3], 24, |b| {
        let y = input.add_channel(b).unwrap();
        y.mul(&y).unwrap().sum()
    });
}

#[test]
fn spatial_mean_grad() {
    let w = Tensor::from_vec(fill(3, 95), &[3]).unwrap();
    check_input_grad(&[3, 4, 2], 27, |x| {
        let y = x.spatial_mean().unwrap();
        y.mul(&w).unwrap().mul(&y).unwrap().sum()
    });
}

#[test]
fn two_layer_conv_net_grad() {
    // conv → silu → conv → mean, checked w.r.t. both kernels: the spec's
    // small composition case for backward().
    let input = Tensor::from_vec(fill(1 * 5 * 5, 101), &[1, 5, 5]).unwrap();
    let k2_const = Tensor::from_vec(fill(2 * 4 * 3 * 3, 100), &[2, 4, 3, 3]).unwrap();
    check_input_grad(&[4, 1, 3, 3], 25, |k1| {
        let h = input.conv2d(k1, 1, 1).unwrap().silu();
        let y = h.conv2d(&k2_const, 1, 1).unwrap();
        y.mul(&y).unwrap().mean()
    });
    let k1_const = Tensor::from_vec(fill(4 * 1 * 3 * 3, 102), &[4, 1, 3, 3]).unwrap();
    check_input_grad(&[2, 4, 3, 3], 26, |k2| {
        let h = input.conv2d(&k1_const, 1, 1).unwrap().silu();
        let y = h.conv2d(k2, 1, 1).unwrap();
        y.mul(&y).unwrap().mean()
    });
}
