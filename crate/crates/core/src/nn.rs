//! Minimal feed-forward inference over a serialized layer graph.
//!
//! Five layer kinds are enough to express the convolutional prefixes this
//! crate truncates: `conv2d`, `relu`, `maxpool`, `flatten`, `dense`.
//! A [`LayerGraph`] is shape-checked once at construction; [`LayerGraph::truncate`]
//! keeps a prefix of the layers (appending a flatten when the cut falls on a
//! tensor-valued layer) and [`LayerGraph::forward`] runs a tensor through the
//! graph, returning the flattened final activation.
//!
//! All arithmetic is f64 with fixed accumulation order, so forward passes
//! are deterministic down to the bit.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("model has no layers")]
    EmptyModel,
    #[error("layer {layer}: {reason}")]
    BadLayer { layer: usize, reason: String },
    #[error("layer {layer}: incompatible input shape: {reason}")]
    ShapeMismatch { layer: usize, reason: String },
    #[error("truncation depth {depth} out of range (valid: 1..={layers})")]
    DepthOutOfRange { depth: usize, layers: usize },
    #[error("input tensor is {got_h}x{got_w}x{got_c} but the model expects {want_h}x{want_w}x{want_c}")]
    InputMismatch {
        want_h: usize,
        want_w: usize,
        want_c: usize,
        got_h: usize,
        got_w: usize,
        got_c: usize,
    },
    #[error("invalid tensor: {0}")]
    BadTensor(String),
}

/// Dense 3-D array in row-major (height, width, channel) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(NnError::BadTensor(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(NnError::BadTensor(format!(
                "data length {} does not match {height}x{width}x{channels} = {}",
                data.len(),
                height * width * channels
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(NnError::BadTensor(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }
}

/// One layer of a feed-forward graph.
///
/// Weight layouts: `conv2d` weights are flat in
/// (out_channel, kernel_row, kernel_col, in_channel) order; `dense`
/// weights are flat in (out_dim, in_dim) order.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        /// Symmetric zero-padding applied to all four sides.
        padding: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    /// True for layers whose output is already a vector.
    fn emits_vector(&self) -> bool {
        matches!(self, Layer::Flatten | Layer::Dense { .. })
    }

    fn validate(&self, layer: usize) -> Result<(), NnError> {
        let bad = |reason: String| Err(NnError::BadLayer { layer, reason });
        match self {
            Layer::Conv2d {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                stride,
                weights,
                biases,
                ..
            } => {
                if *kernel_h == 0 || *kernel_w == 0 || *in_channels == 0 || *out_channels == 0 {
                    return bad(format!(
                        "conv2d dimensions must be positive ({kernel_h}x{kernel_w}, in {in_channels}, out {out_channels})"
                    ));
                }
                if *stride == 0 {
                    return bad(String::from("stride must be >= 1"));
                }
                let want = out_channels * kernel_h * kernel_w * in_channels;
                if weights.len() != want {
                    return bad(format!(
                        "conv2d weight count {} does not match declared {}x{}x{}x{} = {want}",
                        weights.len(),
                        out_channels,
                        kernel_h,
                        kernel_w,
                        in_channels
                    ));
                }
                if biases.len() != *out_channels {
                    return bad(format!(
                        "conv2d bias count {} does not match out channels {out_channels}",
                        biases.len()
                    ));
                }
                Ok(())
            }
            Layer::MaxPool { window, stride } => {
                if *window == 0 {
                    return bad(String::from("maxpool window must be >= 1"));
                }
                if *stride == 0 {
                    return bad(String::from("stride must be >= 1"));
                }
                Ok(())
            }
            Layer::Dense {
                in_dim,
                out_dim,
                weights,
                biases,
            } => {
                if *in_dim == 0 || *out_dim == 0 {
                    return bad(String::from("dense dimensions must be positive"));
                }
                let want = out_dim * in_dim;
                if weights.len() != want {
                    return bad(format!(
                        "dense weight count {} does not match declared {out_dim}x{in_dim} = {want}",
                        weights.len()
                    ));
                }
                if biases.len() != *out_dim {
                    return bad(format!(
                        "dense bias count {} does not match out dim {out_dim}",
                        biases.len()
                    ));
                }
                Ok(())
            }
            Layer::Relu | Layer::Flatten => Ok(()),
        }
    }
}

/// Output shape of a layer, tracked during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Tensor { h: usize, w: usize, c: usize },
    Vector { len: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match self {
            Shape::Tensor { h, w, c } => h * w * c,
            Shape::Vector { len } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn output_shape(layer: &Layer, input: Shape, index: usize) -> Result<Shape, NnError> {
    let mismatch = |reason: String| Err(NnError::ShapeMismatch {
        layer: index,
        reason,
    });
    match layer {
        Layer::Conv2d {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            stride,
            padding,
            ..
        } => match input {
            Shape::Tensor { h, w, c } => {
                if c != *in_channels {
                    return mismatch(format!(
                        "conv2d declares {in_channels} input channels but receives {c}"
                    ));
                }
                let ph = h + 2 * padding;
                let pw = w + 2 * padding;
                if ph < *kernel_h || pw < *kernel_w {
                    return mismatch(format!(
                        "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
                    ));
                }
                Ok(Shape::Tensor {
                    h: (ph - kernel_h) / stride + 1,
                    w: (pw - kernel_w) / stride + 1,
                    c: *out_channels,
                })
            }
            Shape::Vector { .. } => mismatch(String::from("conv2d requires a tensor input")),
        },
        Layer::MaxPool { window, stride } => match input {
            Shape::Tensor { h, w, c } => {
                if h < *window || w < *window {
                    return mismatch(format!(
                        "maxpool window {window} larger than input {h}x{w}"
                    ));
                }
                Ok(Shape::Tensor {
                    h: (h - window) / stride + 1,
                    w: (w - window) / stride + 1,
                    c,
                })
            }
            Shape::Vector { .. } => mismatch(String::from("maxpool requires a tensor input")),
        },
        Layer::Relu => Ok(input),
        // Flatten is the identity on vectors, so a truncation-appended
        // flatten never invalidates a graph.
        Layer::Flatten => Ok(Shape::Vector { len: input.len() }),
        Layer::Dense { in_dim, out_dim, .. } => match input {
            Shape::Vector { len } => {
                if len != *in_dim {
                    return mismatch(format!(
                        "dense declares {in_dim} inputs but receives a vector of length {len}"
                    ));
                }
                Ok(Shape::Vector { len: *out_dim })
            }
            Shape::Tensor { .. } => {
                mismatch(String::from("dense requires a vector input (insert a flatten)"))
            }
        },
    }
}

/// Intermediate activation while running the graph.
#[derive(Debug, Clone)]
enum Activation {
    Tensor(Tensor3),
    Vector(Vec<f64>),
}

impl Activation {
    fn flattened(&self) -> Vec<f64> {
        match self {
            Activation::Tensor(t) => t.data.clone(),
            Activation::Vector(v) => v.clone(),
        }
    }
}

/// An ordered, shape-validated list of layers with a fixed input size.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    name: String,
    input_h: usize,
    input_w: usize,
    input_c: usize,
    layers: Vec<Layer>,
    /// Declared output shape after each layer, computed at construction.
    shapes: Vec<Shape>,
}

impl LayerGraph {
    /// Builds and validates a graph. Errors name the offending 0-based
    /// layer index.
    pub fn new(
        name: String,
        input: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyModel);
        }
        let (input_h, input_w, input_c) = input;
        if input_h == 0 || input_w == 0 || input_c == 0 {
            return Err(NnError::BadTensor(format!(
                "model input dimensions must be positive, got {input_h}x{input_w}x{input_c}"
            )));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut shape = Shape::Tensor {
            h: input_h,
            w: input_w,
            c: input_c,
        };
        for (index, layer) in layers.iter().enumerate() {
            layer.validate(index)?;
            shape = output_shape(layer, shape, index)?;
            shapes.push(shape);
        }
        Ok(Self {
            name,
            input_h,
            input_w,
            input_c,
            layers,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_spec(&self) -> (usize, usize, usize) {
        (self.input_h, self.input_w, self.input_c)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Declared output shape after each layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Length of the flattened vector [`forward`](Self::forward) returns.
    pub fn output_len(&self) -> usize {
        self.shapes.last().map(Shape::len).unwrap_or(0)
    }

    /// Keeps the first `depth` layers (1-based count). If the layer at the
    /// cut emits a tensor, a flatten is appended so the truncated graph
    /// ends in a vector. The original graph is unchanged.
    pub fn truncate(&self, depth: usize) -> Result<LayerGraph, NnError> {
        if depth == 0 || depth > self.layers.len() {
            return Err(NnError::DepthOutOfRange {
                depth,
                layers: self.layers.len(),
            });
        }
        let mut layers: Vec<Layer> = self.layers[..depth].to_vec();
        if !layers[depth - 1].emits_vector() {
            layers.push(Layer::Flatten);
        }
        LayerGraph::new(
            self.name.clone(),
            (self.input_h, self.input_w, self.input_c),
            layers,
        )
    }

    /// Runs `input` through every layer and returns the flattened final
    /// activation. Pure: equal arguments give bitwise-equal outputs.
    pub fn forward(&self, input: &Tensor3) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let mut act = Activation::Tensor(input.clone());
        for layer in &self.layers {
            act = apply(layer, act);
        }
        Ok(act.flattened())
    }

    /// Like [`forward`](Self::forward) but returns the flattened
    /// activation after every layer (index k = after layer k).
    pub fn forward_trace(&self, input: &Tensor3) -> Result<Vec<Vec<f64>>, NnError> {
        self.check_input(input)?;
        let mut act = Activation::Tensor(input.clone());
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            act = apply(layer, act);
            trace.push(act.flattened());
        }
        Ok(trace)
    }

    fn check_input(&self, input: &Tensor3) -> Result<(), NnError> {
        if (input.height, input.width, input.channels) != (self.input_h, self.input_w, self.input_c)
        {
            return Err(NnError::InputMismatch {
                want_h: self.input_h,
                want_w: self.input_w,
                want_c: self.input_c,
                got_h: input.height,
                got_w: input.width,
                got_c: input.channels,
            });
        }
        Ok(())
    }
}

/// Applies one layer. Shapes were validated at construction, so this
/// cannot fail.
fn apply(layer: &Layer, input: Activation) -> Activation {
    match layer {
        Layer::Conv2d {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            stride,
            padding,
            weights,
            biases,
        } => {
            let t = match input {
                Activation::Tensor(t) => t,
                Activation::Vector(_) => unreachable!("validated: conv2d takes tensors"),
            };
            let out_h = (t.height + 2 * padding - kernel_h) / stride + 1;
            let out_w = (t.width + 2 * padding - kernel_w) / stride + 1;
            let mut out = vec![0.0f64; out_h * out_w * out_channels];
            for oh in 0..out_h {
                for ow in 0..out_w {
                    for oc in 0..*out_channels {
                        let mut acc = biases[oc];
                        for ki in 0..*kernel_h {
                            // Signed arithmetic for the padding offset.
                            let ih = (oh * stride + ki) as isize - *padding as isize;
                            if ih < 0 || ih >= t.height as isize {
                                continue;
                            }
                            for kj in 0..*kernel_w {
                                let iw = (ow * stride + kj) as isize - *padding as isize;
                                if iw < 0 || iw >= t.width as isize {
                                    continue;
                                }
                                let wbase = ((oc * kernel_h + ki) * kernel_w + kj) * in_channels;
                                for ic in 0..*in_channels {
                                    acc += weights[wbase + ic] * t.at(ih as usize, iw as usize, ic);
                                }
                            }
                        }
                        out[(oh * out_w + ow) * out_channels + oc] = acc;
                    }
                }
            }
            Activation::Tensor(Tensor3 {
                height: out_h,
                width: out_w,
                channels: *out_channels,
                data: out,
            })
        }
        Layer::Relu => match input {
            Activation::Tensor(mut t) => {
                for x in &mut t.data {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
                Activation::Tensor(t)
            }
            Activation::Vector(mut v) => {
                for x in &mut v {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
                Activation::Vector(v)
            }
        },
        Layer::MaxPool { window, stride } => {
            let t = match input {
                Activation::Tensor(t) => t,
                Activation::Vector(_) => unreachable!("validated: maxpool takes tensors"),
            };
            let out_h = (t.height - window) / stride + 1;
            let out_w = (t.width - window) / stride + 1;
            let mut out = vec![0.0f64; out_h * out_w * t.channels];
            for oh in 0..out_h {
                for ow in 0..out_w {
                    for c in 0..t.channels {
                        let mut m = f64::NEG_INFINITY;
                        for ki in 0..*window {
                            for kj in 0..*window {
                                let v = t.at(oh * stride + ki, ow * stride + kj, c);
                                if v > m {
                                    m = v;
                                }
                            }
                        }
                        out[(oh * out_w + ow) * t.channels + c] = m;
                    }
                }
            }
            Activation::Tensor(Tensor3 {
                height: out_h,
                width: out_w,
                channels: t.channels,
                data: out,
            })
        }
        Layer::Flatten => Activation::Vector(input.flattened()),
        Layer::Dense {
            in_dim,
            out_dim,
            weights,
            biases,
        } => {
            let v = match input {
                Activation::Vector(v) => v,
                Activation::Tensor(_) => unreachable!("validated: dense takes vectors"),
            };
            let mut out = Vec::with_capacity(*out_dim);
            for o in 0..*out_dim {
                let row = &weights[o * in_dim..(o + 1) * in_dim];
                out.push(biases[o] + crate::math::dot(row, &v));
            }
            Activation::Vector(out)
        }
    }
}
