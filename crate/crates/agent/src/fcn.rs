use mrav_autodiff::{AutodiffError, Scalar, Tape, Var};

use crate::config::FcnSpec;

pub const KERNEL: usize = 3;

/// One fully convolutional network: five 3×3 convolutions, parameters held
/// elsewhere and passed in as tape handles in [`Fcn::param_shapes`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fcn {
    pub in_channels: usize,
    pub out_channels: usize,
    pub spec: FcnSpec,
}

impl Fcn {
    pub fn new(in_channels: usize, out_channels: usize, spec: FcnSpec) -> Self {
        Self {
            in_channels,
            out_channels,
            spec,
        }
    }

    /// `(name, shape)` of every parameter, weights before biases per layer.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let [a, b, c, d] = self.spec.widths;
        let chans = [(self.in_channels, a), (a, b), (b, c), (c, d), (d, self.out_channels)];
        let mut out = Vec::with_capacity(10);
        for (i, (cin, cout)) in chans.into_iter().enumerate() {
            out.push((format!("conv{i}.w"), vec![cout, cin, KERNEL, KERNEL]));
            out.push((format!("conv{i}.b"), vec![cout]));
        }
        out
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var, AutodiffError> {
        let pad = self.spec.padding;
        let h0 = tape.conv2d(x, p[0], Some(p[1]), 1, pad)?;
        let h0 = tape.relu(h0);
        let down = tape.conv2d(h0, p[2], Some(p[3]), 2, pad)?;
        let down = tape.relu(down);
        let h2 = tape.conv2d(down, p[4], Some(p[5]), 1, pad)?;
        let h2 = tape.relu(h2);
        let h3 = tape.conv2d(h2, p[6], Some(p[7]), 1, pad)?;
        let h3 = tape.add(h3, down)?;
        let h3 = tape.relu(h3);
        let up = tape.upsample2x(h3)?;
        tape.conv2d(up, p[8], Some(p[9]), 1, pad)
    }
}
