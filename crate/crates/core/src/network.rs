//! Feed-forward policy networks.
//!
//! Architectures are described by a compact string grammar,
//! `in:<d1>x<d2>x...;conv:<f>,<k>,<s>;...;dense:<u>;out:<a>`, which round-trips
//! exactly through [`ArchitectureDescriptor::parse`] and `Display`.
//!
//! Parameter layout is layer by layer, weights then biases:
//! * dense kernels are `[in][out]` row-major,
//! * conv kernels are `[ky][kx][c_in][c_out]` row-major,
//! * spatial activations are `[y][x][c]` (channels last) and are flattened in
//!   that order before the first dense layer.
//!
//! Convolutions are valid (no padding). Hidden layers use ReLU and the output
//! layer is linear.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("malformed architecture `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("invalid architecture: {0}")]
    Invalid(String),
    #[error("weight vector has {got} values, architecture needs {expected} (mismatch at layer {layer})")]
    WeightShape { layer: usize, expected: usize, got: usize },
    #[error("observation has {got} values, input layer expects {expected}")]
    ObservationShape { expected: usize, got: usize },
    #[error("cannot select an action from an empty score vector")]
    EmptyScores,
    #[error("action score {index} is not finite")]
    NonFiniteScore { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv { filters: usize, kernel: usize, stride: usize },
    Dense { units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Spatial { height: usize, width: usize, channels: usize },
    Flat(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Spatial { height, width, channels } => height * width * channels,
            Shape::Flat(n) => n,
        }
    }
}

/// Sizes of one parameterized layer, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Conv {
        kernel: usize,
        stride: usize,
        input: (usize, usize, usize),
        output: (usize, usize, usize),
    },
    Dense { inputs: usize, outputs: usize, relu: bool },
}

impl Step {
    fn params(&self) -> LayerParams {
        match *self {
            Step::Conv { kernel, input: (_, _, c_in), output: (_, _, c_out), .. } => {
                let area = kernel * kernel;
                LayerParams {
                    fan_in: c_in * area,
                    fan_out: c_out * area,
                    weights: area * c_in * c_out,
                    biases: c_out,
                }
            }
            Step::Dense { inputs, outputs, .. } => LayerParams {
                fan_in: inputs,
                fan_out: outputs,
                weights: inputs * outputs,
                biases: outputs,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureDescriptor {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    output_units: usize,
    steps: Vec<Step>,
}

impl ArchitectureDescriptor {
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        output_units: usize,
    ) -> Result<Self, NetworkError> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NetworkError::Invalid(
                "input dimensions must be non-empty and positive".into(),
            ));
        }
        if output_units == 0 {
            return Err(NetworkError::Invalid("output_units must be at least 1".into()));
        }
        let mut shape = match input_shape.as_slice() {
            &[height, width, channels] => Shape::Spatial { height, width, channels },
            dims => Shape::Flat(dims.iter().product()),
        };
        let mut steps = Vec::with_capacity(layers.len() + 1);
        for (index, layer) in layers.iter().enumerate() {
            match *layer {
                Layer::Conv { filters, kernel, stride } => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(NetworkError::Invalid(format!(
                            "layer {index}: conv filters, kernel and stride must be >= 1"
                        )));
                    }
                    let Shape::Spatial { height, width, channels } = shape else {
                        return Err(NetworkError::Invalid(format!(
                            "layer {index}: conv needs a 3-dimensional (HxWxC) input"
                        )));
                    };
                    if kernel > height || kernel > width {
                        return Err(NetworkError::Invalid(format!(
                            "layer {index}: kernel {kernel} larger than {height}x{width} input"
                        )));
                    }
                    let out_h = (height - kernel) / stride + 1;
                    let out_w = (width - kernel) / stride + 1;
                    steps.push(Step::Conv {
                        kernel,
                        stride,
                        input: (height, width, channels),
                        output: (out_h, out_w, filters),
                    });
                    shape = Shape::Spatial { height: out_h, width: out_w, channels: filters };
                }
                Layer::Dense { units } => {
                    if units == 0 {
                        return Err(NetworkError::Invalid(format!(
                            "layer {index}: dense units must be >= 1"
                        )));
                    }
                    steps.push(Step::Dense { inputs: shape.len(), outputs: units, relu: true });
                    shape = Shape::Flat(units);
                }
            }
        }
        steps.push(Step::Dense { inputs: shape.len(), outputs: output_units, relu: false });
        Ok(Self { input_shape, layers, output_units, steps })
    }

    /// Dense hidden stack between a flat input and the output layer.
    pub fn dense(inputs: usize, hidden: &[usize], outputs: usize) -> Result<Self, NetworkError> {
        Self::new(
            vec![inputs],
            hidden.iter().map(|&units| Layer::Dense { units }).collect(),
            outputs,
        )
    }

    /// Same hidden layers, new input and output sizes.
    pub fn with_io(&self, input_shape: Vec<usize>, output_units: usize) -> Result<Self, NetworkError> {
        Self::new(input_shape, self.layers.clone(), output_units)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_units(&self) -> usize {
        self.output_units
    }

    /// Per-layer parameter sizes, output layer last.
    pub fn layer_params(&self) -> Vec<LayerParams> {
        self.steps.iter().map(Step::params).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.steps.iter().map(|s| {
            let p = s.params();
            p.weights + p.biases
        }).sum()
    }

    pub fn parse(text: &str) -> Result<Self, NetworkError> {
        let err = |reason: String| NetworkError::Parse { input: text.to_string(), reason };
        let parts: Vec<&str> = text.split(';').collect();
        let (first, rest) = parts.split_first().ok_or_else(|| err("empty descriptor".into()))?;
        let (last, middle) = rest
            .split_last()
            .ok_or_else(|| err("missing `out:` section".into()))?;

        let dims = first
            .strip_prefix("in:")
            .ok_or_else(|| err("descriptor must start with `in:`".into()))?;
        let input_shape = dims
            .split('x')
            .map(|d| parse_count(d).ok_or_else(|| err(format!("bad input dimension `{d}`"))))
            .collect::<Result<Vec<_>, _>>()?;

        let layers = middle
            .iter()
            .map(|part| parse_layer(part).map_err(err))
            .collect::<Result<Vec<_>, _>>()?;

        let out = last
            .strip_prefix("out:")
            .ok_or_else(|| err("descriptor must end with `out:<actions>`".into()))?;
        let output_units = parse_count(out).ok_or_else(|| err(format!("bad output units `{out}`")))?;
        Self::new(input_shape, layers, output_units)
    }

    /// Evaluates the network and returns one score per action.
    pub fn forward(&self, weights: &[f32], observation: &[f32]) -> Result<Vec<f32>, NetworkError> {
        self.check_weights(weights.len())?;
        if observation.len() != self.input_len() {
            return Err(NetworkError::ObservationShape {
                expected: self.input_len(),
                got: observation.len(),
            });
        }
        let mut activation = observation.to_vec();
        let mut offset = 0;
        for step in &self.steps {
            let p = step.params();
            let kernel = &weights[offset..offset + p.weights];
            let bias = &weights[offset + p.weights..offset + p.weights + p.biases];
            offset += p.weights + p.biases;
            activation = match *step {
                Step::Dense { inputs, outputs, relu } => {
                    let mut out = bias.to_vec();
                    for (i, &x) in activation.iter().enumerate().take(inputs) {
                        if x == 0.0 {
                            continue;
                        }
                        let row = &kernel[i * outputs..(i + 1) * outputs];
                        for (o, &w) in out.iter_mut().zip(row) {
                            *o += x * w;
                        }
                    }
                    if relu {
                        out.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    out
                }
                Step::Conv { kernel: k, stride, input: (_, in_w, c_in), output: (out_h, out_w, c_out) } => {
                    conv2d(&activation, kernel, bias, k, stride, in_w, c_in, out_h, out_w, c_out)
                }
            };
        }
        Ok(activation)
    }

    fn check_weights(&self, got: usize) -> Result<(), NetworkError> {
        let expected = self.parameter_count();
        if got == expected {
            return Ok(());
        }
        let mut cumulative = 0;
        let mut layer = self.steps.len() - 1;
        for (index, step) in self.steps.iter().enumerate() {
            let p = step.params();
            cumulative += p.weights + p.biases;
            if got < cumulative {
                layer = index;
                break;
            }
        }
        Err(NetworkError::WeightShape { layer, expected, got })
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    input: &[f32],
    kernel: &[f32],
    bias: &[f32],
    k: usize,
    stride: usize,
    in_w: usize,
    c_in: usize,
    out_h: usize,
    out_w: usize,
    c_out: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; out_h * out_w * c_out];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let cell = &mut out[(oy * out_w + ox) * c_out..(oy * out_w + ox + 1) * c_out];
            cell.copy_from_slice(bias);
            for ky in 0..k {
                for kx in 0..k {
                    let iy = oy * stride + ky;
                    let ix = ox * stride + kx;
                    let pixel = &input[(iy * in_w + ix) * c_in..(iy * in_w + ix + 1) * c_in];
                    for (ci, &x) in pixel.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        let base = ((ky * k + kx) * c_in + ci) * c_out;
                        for (o, &w) in cell.iter_mut().zip(&kernel[base..base + c_out]) {
                            *o += x * w;
                        }
                    }
                }
            }
            cell.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    out
}

fn parse_layer(part: &str) -> Result<Layer, String> {
    if let Some(args) = part.strip_prefix("conv:") {
        let nums = args
            .split(',')
            .map(|n| parse_count(n).ok_or_else(|| format!("bad conv argument `{n}`")))
            .collect::<Result<Vec<_>, _>>()?;
        let &[filters, kernel, stride] = nums.as_slice() else {
            return Err(format!("conv needs <filters>,<kernel>,<stride>, got `{part}`"));
        };
        Ok(Layer::Conv { filters, kernel, stride })
    } else if let Some(units) = part.strip_prefix("dense:") {
        let units = parse_count(units).ok_or_else(|| format!("bad dense units `{units}`"))?;
        Ok(Layer::Dense { units })
    } else {
        Err(format!("unknown layer `{part}`"))
    }
}

/// Parses a `;`-separated hidden layer list such as `dense:16;dense:16`.
/// The empty string means no hidden layers.
pub fn parse_layers(text: &str) -> Result<Vec<Layer>, NetworkError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|part| {
            parse_layer(part).map_err(|reason| NetworkError::Parse { input: text.to_string(), reason })
        })
        .collect()
}

pub fn format_layers(layers: &[Layer]) -> String {
    layers
        .iter()
        .map(|layer| match layer {
            Layer::Conv { filters, kernel, stride } => format!("conv:{filters},{kernel},{stride}"),
            Layer::Dense { units } => format!("dense:{units}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_count(text: &str) -> Option<usize> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

impl fmt::Display for ArchitectureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in:")?;
        for (i, d) in self.input_shape.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        if !self.layers.is_empty() {
            write!(f, ";{}", format_layers(&self.layers))?;
        }
        write!(f, ";out:{}", self.output_units)
    }
}

impl FromStr for ArchitectureDescriptor {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Argmax over action scores; ties go to the lowest index.
pub fn select_action(scores: &[f32]) -> Result<usize, NetworkError> {
    if scores.is_empty() {
        return Err(NetworkError::EmptyScores);
    }
    let mut best = 0;
    for (index, &score) in scores.iter().enumerate() {
        if !score.is_finite() {
            return Err(NetworkError::NonFiniteScore { index });
        }
        if score > scores[best] {
            best = index;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_scores() {
        let arch = ArchitectureDescriptor::dense(3, &[4], 2).unwrap();
        let weights = vec![0.0; arch.parameter_count()];
        assert_eq!(arch.forward(&weights, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_dense_passes_observation_through() {
        let arch = ArchitectureDescriptor::dense(3, &[], 3).unwrap();
        let mut weights = vec![0.0; 12];
        for i in 0..3 {
            weights[i * 3 + i] = 1.0;
        }
        let obs = [0.25, -1.5, 7.0];
        assert_eq!(arch.forward(&weights, &obs).unwrap(), obs.to_vec());
    }

    #[test]
    fn select_action_cases() {
        assert_eq!(select_action(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(select_action(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(select_action(&[-1.0, -2.0, -3.0]).unwrap(), 0);
        assert_eq!(select_action(&[]), Err(NetworkError::EmptyScores));
        assert_eq!(
            select_action(&[0.0, f32::NAN]),
            Err(NetworkError::NonFiniteScore { index: 1 })
        );
    }

    #[test]
    fn reference_dqn_architecture_parameter_count() {
        let arch = ArchitectureDescriptor::parse(
            "in:84x84x4;conv:32,8,4;conv:64,4,2;conv:64,3,1;dense:512;out:18",
        )
        .unwrap();
        // 8224 + 32832 + 36928 + 1606144 + 9234
        assert_eq!(arch.parameter_count(), 1_693_362);
    }

    #[test]
    fn descriptor_round_trip() {
        for text in [
            "in:84x84x4;conv:32,8,4;conv:64,4,2;conv:64,3,1;dense:512;out:18",
            "in:482;dense:16;dense:16;out:5",
            "in:2x3;out:1",
        ] {
            assert_eq!(ArchitectureDescriptor::parse(text).unwrap().to_string(), text);
        }
    }

    #[test]
    fn rejects_bad_descriptors() {
        for text in [
            "",
            "dense:4;out:2",
            "in:4;dense:4",
            "in:4;dense:0;out:2",
            "in:4;out:0",
            "in:4x0;out:1",
            "in:4;conv:1,1,1;out:2",
            "in:8x8x1;dense:3;conv:1,1,1;out:2",
            "in:8x8x1;conv:1,9,1;out:2",
            "in:8x8x1;conv:1,2;out:2",
            "in:8;pool:2;out:2",
            "in:+8;out:2",
        ] {
            assert!(ArchitectureDescriptor::parse(text).is_err(), "{text} accepted");
        }
    }

    #[test]
    fn weight_mismatch_names_the_layer() {
        let arch = ArchitectureDescriptor::dense(2, &[3], 2).unwrap();
        // layer 0 has 9 params, output layer 8
        let err = arch.forward(&vec![0.0; 5], &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, NetworkError::WeightShape { layer: 0, expected: 17, got: 5 });
        let err = arch.forward(&vec![0.0; 12], &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, NetworkError::WeightShape { layer: 1, expected: 17, got: 12 });
        let err = arch.forward(&vec![0.0; 17], &[0.0]).unwrap_err();
        assert_eq!(err, NetworkError::ObservationShape { expected: 2, got: 1 });
    }

    #[test]
    fn conv_output_size() {
        let arch = ArchitectureDescriptor::parse("in:84x84x4;conv:32,8,4;conv:64,4,2;conv:64,3,1;out:1").unwrap();
        let params = arch.layer_params();
        // 20x20 -> 9x9 -> 7x7
        assert_eq!(params[3].fan_in, 7 * 7 * 64);
        assert_eq!(params[0].fan_in, 4 * 64);
        assert_eq!(params[0].fan_out, 32 * 64);
    }

    #[test]
    fn conv_single_filter_matches_hand_computation() {
        // 3x3x1 input, one 2x2 kernel, stride 1 -> 2x2 output, then a 4->1 sum.
        let arch = ArchitectureDescriptor::parse("in:3x3x1;conv:1,2,1;out:1").unwrap();
        let mut weights = vec![1.0, 0.0, 0.0, -1.0, 0.5];
        weights.extend([1.0, 1.0, 1.0, 1.0, 0.0]);
        let obs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        // each window: top-left - bottom-right + 0.5 = -4 + 0.5 -> relu 0
        assert_eq!(arch.forward(&weights, &obs).unwrap(), vec![0.0]);
        let obs: Vec<f32> = obs.iter().rev().copied().collect();
        // windows give 4.5 each
        assert_eq!(arch.forward(&weights, &obs).unwrap(), vec![18.0]);
    }
}
