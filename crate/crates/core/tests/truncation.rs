//! Prefix consistency over randomly generated layer graphs: truncating
//! at any depth and running the prefix must reproduce the intermediate
//! activation of the full forward pass bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use shallowface_core::nn::{Layer, LayerGraph, Tensor3};

enum Shape {
    Tensor(usize, usize, usize),
    Vector(usize),
}

fn random_weights(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

fn random_graph(rng: &mut ChaCha20Rng, index: usize) -> (LayerGraph, Tensor3) {
    let h = rng.gen_range(4..=8);
    let w = rng.gen_range(4..=8);
    let c = rng.gen_range(1..=2);
    let mut shape = Shape::Tensor(h, w, c);
    let mut layers = Vec::new();
    let n_layers = rng.gen_range(2..=6);

    for _ in 0..n_layers {
        match shape {
            Shape::Tensor(th, tw, tc) => match rng.gen_range(0..4) {
                0 => {
                    let kernel_h = rng.gen_range(1..=th.min(3));
                    let kernel_w = rng.gen_range(1..=tw.min(3));
                    let out_channels = rng.gen_range(1..=3);
                    let stride = rng.gen_range(1..=2);
                    let padding = rng.gen_range(0..=1);
                    let oh = (th + 2 * padding - kernel_h) / stride + 1;
                    let ow = (tw + 2 * padding - kernel_w) / stride + 1;
                    layers.push(Layer::Conv2d {
                        kernel_h,
                        kernel_w,
                        in_channels: tc,
                        out_channels,
                        stride,
                        padding,
                        weights: random_weights(
                            rng,
                            out_channels * kernel_h * kernel_w * tc,
                        ),
                        biases: random_weights(rng, out_channels),
                    });
                    shape = Shape::Tensor(oh, ow, out_channels);
                }
                1 => layers.push(Layer::Relu),
                2 => {
                    let window = rng.gen_range(1..=th.min(tw).min(3));
                    let stride = rng.gen_range(1..=window.max(1));
                    layers.push(Layer::MaxPool { window, stride });
                    shape = Shape::Tensor(
                        (th - window) / stride + 1,
                        (tw - window) / stride + 1,
                        tc,
                    );
                }
                _ => {
                    layers.push(Layer::Flatten);
                    shape = Shape::Vector(th * tw * tc);
                }
            },
            Shape::Vector(len) => {
                if rng.gen_bool(0.3) {
                    layers.push(Layer::Relu);
                } else {
                    let out_dim = rng.gen_range(1..=6);
                    layers.push(Layer::Dense {
                        in_dim: len,
                        out_dim,
                        weights: random_weights(rng, out_dim * len),
                        biases: random_weights(rng, out_dim),
                    });
                    shape = Shape::Vector(out_dim);
                }
            }
        }
    }

    let graph = LayerGraph::new(format!("random-{index}"), (h, w, c), layers)
        .expect("generator only emits consistent chains");
    let input = Tensor3::new(h, w, c, random_weights(rng, h * w * c)).unwrap();
    (graph, input)
}

#[test]
fn every_truncation_prefix_matches_the_full_trace() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x7040);
    for index in 0..50 {
        let (graph, input) = random_graph(&mut rng, index);
        let trace = graph.forward_trace(&input).unwrap();
        assert_eq!(trace.len(), graph.layers().len());

        for depth in 1..=graph.layers().len() {
            let prefix = graph.truncate(depth).unwrap();
            let got = prefix.forward(&input).unwrap();
            let want = &trace[depth - 1];
            assert_eq!(got.len(), want.len(), "graph {index} depth {depth}");
            for (a, b) in got.iter().zip(want) {
                assert_eq!(
                    a.to_bits(),
                    b.to_bits(),
                    "graph {index} depth {depth} diverged"
                );
            }
        }
    }
}

#[test]
fn full_depth_truncation_reproduces_the_whole_network() {
    let mut rng = ChaCha20Rng::seed_from_u64(0x7041);
    for index in 0..10 {
        let (graph, input) = random_graph(&mut rng, index);
        let full = graph.truncate(graph.layers().len()).unwrap();
        assert_eq!(
            full.forward(&input).unwrap(),
            graph.forward(&input).unwrap(),
            "graph {index}"
        );
    }
}
