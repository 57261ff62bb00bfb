//! Central finite differences against the analytic backward passes.

mod common;

use common::*;
use rand::Rng;
use selfonn_core::layers::{
    build_network, gen_conv_backward, gen_conv_forward, network_backward, network_forward,
    tanh_backward, tanh_forward, GenerativeConvParams, Network,
};
use selfonn_core::train::mse_loss;
use selfonn_core::Tensor4;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-3;

fn layer_objective(x: &Tensor4<f64>, p: &GenerativeConvParams<f64>, gy: &Tensor4<f64>) -> f64 {
    gen_conv_forward(x, p, 1).unwrap().0.dot(gy).unwrap()
}

#[test]
fn generative_layer_gradients() {
    let mut rng = rng(21);
    for q in [1, 2, 3, 5, 7] {
        for &(cin, cout) in &[(2, 3), (5, 6)] {
            let p = random_params(q, cout, cin, &mut rng);
            let x = random_tensor([2, cin, 5, 4], -0.9, 0.9, &mut rng);
            let gy = random_tensor([2, cout, 5, 4], -1.0, 1.0, &mut rng);
            let (_, cache) = gen_conv_forward(&x, &p, 1).unwrap();
            let (grads, gx) = gen_conv_backward(&cache, &p, &gy, 1).unwrap();

            let mut xs = x.as_slice().to_vec();
            for i in (0..xs.len()).step_by(3) {
                let fd = central_diff(&mut xs, i, H, |v| {
                    let xt = Tensor4::from_vec(2, cin, 5, 4, v.to_vec()).unwrap();
                    layer_objective(&xt, &p, &gy)
                });
                let e = rel_err(fd, gx.as_slice()[i], FLOOR);
                assert!(e < TOL, "Q={q} {cin}->{cout} dx[{i}]: fd {fd} vs {}", gx.as_slice()[i]);
            }

            for order in 1..=q {
                let mut w = p.kernel(order).weights.clone();
                for i in (0..w.len()).step_by(5) {
                    let fd = central_diff(&mut w, i, H, |v| {
                        let mut pt = p.clone();
                        pt.weights_mut(order).copy_from_slice(v);
                        layer_objective(&x, &pt, &gy)
                    });
                    let an = grads.weights[order - 1][i];
                    assert!(rel_err(fd, an, FLOOR) < TOL, "Q={q} dw{order}[{i}]: fd {fd} vs {an}");
                }
            }

            let mut b = p.bias().to_vec();
            for i in 0..b.len() {
                let fd = central_diff(&mut b, i, H, |v| {
                    let mut pt = p.clone();
                    pt.bias_mut().copy_from_slice(v);
                    layer_objective(&x, &pt, &gy)
                });
                assert!(rel_err(fd, grads.bias[i], FLOOR) < TOL);
            }
        }
    }
}

#[test]
fn tanh_gradient() {
    let mut rng = rng(22);
    let x = random_tensor([2, 3, 4, 4], -3.0, 3.0, &mut rng);
    let gy = random_tensor([2, 3, 4, 4], -1.0, 1.0, &mut rng);
    let an = tanh_backward(&tanh_forward(&x), &gy).unwrap();
    let mut xs = x.as_slice().to_vec();
    for i in 0..xs.len() {
        let fd = central_diff(&mut xs, i, H, |v| {
            let xt = Tensor4::from_vec(2, 3, 4, 4, v.to_vec()).unwrap();
            tanh_forward(&xt).dot(&gy).unwrap()
        });
        assert!(rel_err(fd, an.as_slice()[i], FLOOR) < TOL);
    }
}

#[test]
fn mse_gradient() {
    let mut rng = rng(23);
    let pred = random_tensor([3, 1, 5, 5], 0.0, 1.0, &mut rng);
    let target = random_tensor([3, 1, 5, 5], 0.0, 1.0, &mut rng);
    let (_, an) = mse_loss(&pred, &target).unwrap();
    let mut ps = pred.as_slice().to_vec();
    for i in 0..ps.len() {
        let fd = central_diff(&mut ps, i, H, |v| {
            let pt = Tensor4::from_vec(3, 1, 5, 5, v.to_vec()).unwrap();
            mse_loss(&pt, &target).unwrap().0
        });
        // the per-element derivative is O(1/n), so use a scaled floor
        assert!(rel_err(fd, an.as_slice()[i], FLOOR / 75.0) < TOL, "{i}: {fd} vs {}", an.as_slice()[i]);
    }
}

fn net_loss(net: &Network<f64>, x: &Tensor4<f64>, y: &Tensor4<f64>) -> f64 {
    mse_loss(&network_forward(net, x).unwrap().0, y).unwrap().0
}

#[test]
fn network_gradients() {
    for (name, seed) in [("CNN-4", 31), ("Self-ONN-3-4", 32), ("Self-ONN-7-4", 33)] {
        let mut rng = rng(seed);
        let net: Network<f64> = build_network(name, 1, seed).unwrap();
        let x = random_tensor([2, 1, 8, 8], 0.0, 1.0, &mut rng);
        let y = random_tensor([2, 1, 8, 8], 0.0, 1.0, &mut rng);
        let (pred, cache) = network_forward(&net, &x).unwrap();
        let (_, g) = mse_loss(&pred, &y).unwrap();
        let grads = network_backward(&net, &cache, &g).unwrap();
        let flat_grads: Vec<f64> = grads.slices().concat();
        assert_eq!(flat_grads.len(), net.param_count());

        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let idx = rng.random_range(0..net.param_count());
            let fd = {
                let mut probe = net.clone();
                let eval = |probe: &mut Network<f64>, delta: f64| {
                    let mut left = idx;
                    for s in probe.param_slices_mut() {
                        if left < s.len() {
                            s[left] += delta;
                            break;
                        }
                        left -= s.len();
                    }
                    net_loss(probe, &x, &y)
                };
                let up = eval(&mut probe, H);
                let down = eval(&mut probe, -2.0 * H);
                (up - down) / (2.0 * H)
            };
            worst = worst.max(rel_err(fd, flat_grads[idx], FLOOR / 128.0));
        }
        assert!(worst < TOL, "{name}: worst relative error {worst}");
    }
}
