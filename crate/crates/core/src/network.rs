//! DQNN architectures and the channel they implement.
//!
//! A network is a sequence of perceptron isometries. Perceptron `m` maps the
//! neurons of its source layer into `added (x) source`, where `added` is one
//! neuron of the next layer (conventional) or one output/hidden neuron followed
//! by one ancilla neuron (extended). New neurons are always tensored from the
//! left of the source layer inside the perceptron, so that the canonical
//! embedding is `|0>_new (x) 1_src`.
//!
//! The global factor order is `H_L (x) H_{L-1} (x) ... (x) H_1`, with the
//! neurons of each layer in label order. Perceptrons run layer by layer and,
//! within a layer, by increasing neuron label.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::isometry::{active_param_count, build_isometry, isometry_jacobian, ParamMatrix};
use crate::tensor::{
    self, digits, expect_square, partial_trace, vec_row_major, ComplexMatrix, C64, ZERO,
};

/// `(layer, neuron)`, both zero-based.
pub type NeuronId = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Conventional,
    Extended,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerRole {
    Input,
    Hidden,
    Ancilla,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub role: LayerRole,
    pub dims: Vec<usize>,
}

/// One perceptron: reads the whole source layer, adds `added` neurons on its left.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Perceptron {
    pub source: usize,
    pub added: Vec<NeuronId>,
    pub d_in: usize,
    pub d_out: usize,
}

/// Serializable architecture description.
///
/// `layers` lists the input, hidden and output layers (neuron dimensions per
/// layer). For the extended style, `ancilla` optionally overrides the ancilla
/// layer inserted before each non-input layer; by default every ancilla neuron
/// has the dimension of the neuron it is created with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub style: Style,
    pub layers: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancilla: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    style: Style,
    layers: Vec<Layer>,
    perceptrons: Vec<Perceptron>,
    spec: ArchitectureSpec,
}

fn check_layer_dims(layers: &[Vec<usize>]) -> Result<()> {
    if layers.len() < 2 {
        return Err(Error::Config("a network needs at least an input and an output layer".into()));
    }
    for (l, dims) in layers.iter().enumerate() {
        if dims.is_empty() {
            return Err(Error::Config(format!("layer {l} has no neurons")));
        }
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::Config(format!("layer {l} has a zero-dimensional neuron")));
        }
    }
    Ok(())
}

impl Architecture {
    /// Conventional DQNN: each perceptron adds one neuron of the next layer.
    pub fn conventional(layers: Vec<Vec<usize>>) -> Result<Self> {
        Self::from_spec(&ArchitectureSpec {
            style: Style::Conventional,
            layers,
            ancilla: None,
        })
    }

    /// Extended DQNN with one ancilla layer between consecutive main layers.
    pub fn extended(layers: Vec<Vec<usize>>, ancilla: Option<Vec<Vec<usize>>>) -> Result<Self> {
        Self::from_spec(&ArchitectureSpec {
            style: Style::Extended,
            layers,
            ancilla,
        })
    }

    /// Input, ancilla and output neuron of dimension `d` joined by one perceptron.
    pub fn minimal_extended(d: usize) -> Self {
        Self::extended(vec![vec![d], vec![d]], None).expect("minimal architecture is valid")
    }

    pub fn from_spec(spec: &ArchitectureSpec) -> Result<Self> {
        check_layer_dims(&spec.layers)?;
        let main = &spec.layers;
        let n_main = main.len();
        let role_of = |i: usize| {
            if i == 0 {
                LayerRole::Input
            } else if i + 1 == n_main {
                LayerRole::Output
            } else {
                LayerRole::Hidden
            }
        };

        let mut layers = Vec::new();
        let mut perceptrons = Vec::new();
        match spec.style {
            Style::Conventional => {
                if spec.ancilla.is_some() {
                    return Err(Error::Config("conventional networks have no ancilla layers".into()));
                }
                for (i, dims) in main.iter().enumerate() {
                    layers.push(Layer {
                        role: role_of(i),
                        dims: dims.clone(),
                    });
                }
                for l in 0..n_main - 1 {
                    let d_src: usize = main[l].iter().product();
                    for (k, &dk) in main[l + 1].iter().enumerate() {
                        perceptrons.push(Perceptron {
                            source: l,
                            added: vec![(l + 1, k)],
                            d_in: d_src,
                            d_out: d_src * dk,
                        });
                    }
                }
            }
            Style::Extended => {
                let ancilla = match &spec.ancilla {
                    Some(a) => {
                        if a.len() != n_main - 1 {
                            return Err(Error::Config(format!(
                                "expected {} ancilla layers, got {}",
                                n_main - 1,
                                a.len()
                            )));
                        }
                        for (i, layer) in a.iter().enumerate() {
                            if layer.len() != main[i + 1].len() || layer.iter().any(|&d| d < 1) {
                                return Err(Error::Config(format!(
                                    "ancilla layer {i} must have one positive dimension per neuron of the next layer"
                                )));
                            }
                        }
                        a.clone()
                    }
                    None => main[1..].to_vec(),
                };
                layers.push(Layer {
                    role: LayerRole::Input,
                    dims: main[0].clone(),
                });
                for i in 1..n_main {
                    layers.push(Layer {
                        role: LayerRole::Ancilla,
                        dims: ancilla[i - 1].clone(),
                    });
                    layers.push(Layer {
                        role: role_of(i),
                        dims: main[i].clone(),
                    });
                }
                for i in 0..n_main - 1 {
                    let src = 2 * i;
                    let d_src: usize = main[i].iter().product();
                    for k in 0..main[i + 1].len() {
                        let d_new = main[i + 1][k] * ancilla[i][k];
                        perceptrons.push(Perceptron {
                            source: src,
                            added: vec![(src + 2, k), (src + 1, k)],
                            d_in: d_src,
                            d_out: d_src * d_new,
                        });
                    }
                }
            }
        }
        Ok(Self {
            style: spec.style,
            layers,
            perceptrons,
            spec: spec.clone(),
        })
    }

    pub fn style(&self) -> Style {
        self.style
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn perceptrons(&self) -> &[Perceptron] {
        &self.perceptrons
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn neuron_dim(&self, id: NeuronId) -> usize {
        self.layers[id.0].dims[id.1]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].dims.iter().product()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least two layers").dims.iter().product()
    }

    /// Total number of active parameters.
    pub fn param_count(&self) -> usize {
        self.perceptrons
            .iter()
            .map(|p| active_param_count(p.d_in, p.d_out).expect("perceptron shapes are valid"))
            .sum()
    }

    fn source_neurons(&self, p: &Perceptron) -> Vec<NeuronId> {
        (0..self.layers[p.source].dims.len()).map(|k| (p.source, k)).collect()
    }

    /// Global position key: higher layers to the left, labels increasing within a layer.
    fn order_key(id: &NeuronId) -> (std::cmp::Reverse<usize>, usize) {
        (std::cmp::Reverse(id.0), id.1)
    }

    /// Neurons present after the first `m` perceptrons, in global order.
    fn layout_after(&self, m: usize) -> Vec<NeuronId> {
        let mut ids: Vec<NeuronId> = (0..self.layers[0].dims.len()).map(|k| (0, k)).collect();
        for p in &self.perceptrons[..m] {
            ids.extend(p.added.iter().copied());
        }
        ids.sort_by_key(Self::order_key);
        ids
    }

    /// All neurons in global order.
    pub fn full_layout(&self) -> Vec<NeuronId> {
        self.layout_after(self.perceptrons.len())
    }
}

/// Matrix of `op` (acting from the `op_cols` factors to the `op_rows` factors)
/// on the full spaces `layout_in -> layout_out`, identity on the spectators.
fn embed_operator(
    op: &ComplexMatrix,
    op_rows: &[NeuronId],
    op_cols: &[NeuronId],
    layout_out: &[NeuronId],
    layout_in: &[NeuronId],
    dim: impl Fn(NeuronId) -> usize,
) -> ComplexMatrix {
    let dims_in: Vec<usize> = layout_in.iter().map(|&n| dim(n)).collect();
    let dims_out: Vec<usize> = layout_out.iter().map(|&n| dim(n)).collect();
    let dims_rows: Vec<usize> = op_rows.iter().map(|&n| dim(n)).collect();
    let d_in: usize = dims_in.iter().product();
    let d_out: usize = dims_out.iter().product();

    let pos_in: HashMap<NeuronId, usize> = layout_in.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let pos_rows: HashMap<NeuronId, usize> = op_rows.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    // output digit source: either a digit of the operator row or a spectator digit from the input
    enum Src {
        Row(usize),
        Spectator(usize),
    }
    let out_src: Vec<Src> = layout_out
        .iter()
        .map(|n| match pos_rows.get(n) {
            Some(&r) => Src::Row(r),
            None => Src::Spectator(pos_in[n]),
        })
        .collect();

    let mut w = ComplexMatrix::zeros(d_out, d_in);
    let mut din = vec![0usize; dims_in.len()];
    let mut drow = vec![0usize; dims_rows.len()];
    for c in 0..d_in {
        digits(c, &dims_in, &mut din);
        let c_op = op_cols
            .iter()
            .fold(0usize, |acc, n| acc * dim(*n) + din[pos_in[n]]);
        for r_op in 0..op.nrows() {
            let val = op[(r_op, c_op)];
            if val == ZERO {
                continue;
            }
            digits(r_op, &dims_rows, &mut drow);
            let mut r = 0usize;
            for (s, &d) in out_src.iter().zip(&dims_out) {
                let digit = match *s {
                    Src::Row(i) => drow[i],
                    Src::Spectator(i) => din[i],
                };
                r = r * d + digit;
            }
            w[(r, c)] = val;
        }
    }
    w
}

/// A network: an architecture plus one parameter matrix per perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<ParamMatrix>,
}

/// Location of one flattened parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLocation {
    pub perceptron: usize,
    pub x: usize,
    pub y: usize,
}

/// Cached forward quantities for derivatives.
struct Forward {
    /// `W_{m-1} ... W_1` (identity for `m = 0`)
    prefix: Vec<ComplexMatrix>,
    /// `W_M ... W_{m+1}`
    suffix: Vec<ComplexMatrix>,
    total: ComplexMatrix,
}

impl Network {
    /// All parameters zero: the canonical-embedding network.
    pub fn new(arch: Architecture) -> Self {
        let params = arch
            .perceptrons
            .iter()
            .map(|p| ParamMatrix::zeros(p.d_in, p.d_out).expect("perceptron shapes are valid"))
            .collect();
        Self { arch, params }
    }

    pub fn with_params(arch: Architecture, params: Vec<ParamMatrix>) -> Result<Self> {
        if params.len() != arch.perceptrons.len() {
            return Err(Error::DimensionMismatch {
                expected: arch.perceptrons.len(),
                actual: params.len(),
            });
        }
        for (p, pm) in arch.perceptrons.iter().zip(&params) {
            if pm.d_in() != p.d_in || pm.d_out() != p.d_out {
                return Err(Error::Config(format!(
                    "parameter matrix {}x{} does not fit perceptron {}->{}",
                    pm.d_in(),
                    pm.d_out(),
                    p.d_in,
                    p.d_out
                )));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[ParamMatrix] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.active_count()).sum()
    }

    pub fn param_locations(&self) -> Vec<ParamLocation> {
        self.params
            .iter()
            .enumerate()
            .flat_map(|(m, p)| {
                p.active_indices()
                    .into_iter()
                    .map(move |(x, y)| ParamLocation { perceptron: m, x, y })
            })
            .collect()
    }

    /// Active parameters of all perceptrons, concatenated.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.active_values()).collect()
    }

    /// Copy of the network with new flattened parameters.
    pub fn with_flat_params(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut params = self.params.clone();
        let mut offset = 0;
        for p in &mut params {
            let n = p.active_count();
            p.set_active(&flat[offset..offset + n])?;
            offset += n;
        }
        Ok(Self {
            arch: self.arch.clone(),
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    /// Dimension of the traced-out factors.
    pub fn env_dim(&self) -> usize {
        let total: usize = self
            .arch
            .full_layout()
            .iter()
            .map(|&n| self.arch.neuron_dim(n))
            .product();
        total / self.output_dim()
    }

    fn embed_local(&self, m: usize, local: &ComplexMatrix) -> ComplexMatrix {
        let p = &self.arch.perceptrons[m];
        let src = self.arch.source_neurons(p);
        let mut rows = p.added.clone();
        rows.extend(src.iter().copied());
        let before = self.arch.layout_after(m);
        let after = self.arch.layout_after(m + 1);
        embed_operator(local, &rows, &src, &after, &before, |n| self.arch.neuron_dim(n))
    }

    fn forward(&self) -> Forward {
        let m_count = self.params.len();
        let embedded: Vec<ComplexMatrix> = (0..m_count)
            .map(|m| self.embed_local(m, &build_isometry(&self.params[m])))
            .collect();
        let mut prefix = Vec::with_capacity(m_count);
        let mut acc = tensor::identity(self.input_dim());
        for w in &embedded {
            prefix.push(acc.clone());
            acc = w * acc;
        }
        let total = acc;
        let mut suffix = vec![ComplexMatrix::zeros(0, 0); m_count];
        let d_total = total.nrows();
        let mut left = tensor::identity(d_total);
        for m in (0..m_count).rev() {
            suffix[m] = left.clone();
            left *= &embedded[m];
        }
        Forward {
            prefix,
            suffix,
            total,
        }
    }

    /// Stinespring isometry of the whole network, `H_in -> H_out (x) H_env`.
    pub fn assemble_isometry(&self) -> ComplexMatrix {
        let mut v = tensor::identity(self.input_dim());
        for m in 0..self.params.len() {
            v = self.embed_local(m, &build_isometry(&self.params[m])) * v;
        }
        v
    }

    /// Kraus operators `G_e = (I_out (x) <e|) V`, environment labels in row-major order.
    pub fn kraus_operators(&self) -> Vec<ComplexMatrix> {
        crate::channels::kraus_from_stinespring(&self.assemble_isometry(), self.output_dim())
    }

    /// The implemented channel, held as its Stinespring isometry.
    pub fn channel(&self) -> Channel {
        Channel::from_stinespring(self.output_dim(), self.assemble_isometry())
            .expect("network isometry has output factor first")
    }

    /// `rho_out = tr_env(V rho V^dagger)`.
    pub fn apply(&self, rho_in: &ComplexMatrix) -> Result<ComplexMatrix> {
        expect_square(rho_in, self.input_dim())?;
        let v = self.assemble_isometry();
        Ok(reduce_to_output(&v, &v, rho_in, self.output_dim()))
    }

    /// Normalized Choi state `(1/d_in) sum_ij E(|i><j|) (x) |i><j|`.
    pub fn choi_state(&self) -> ComplexMatrix {
        let v = self.assemble_isometry();
        choi_from_isometry_pair(&v, &v, self.input_dim(), self.output_dim())
    }

    /// Derivative of the embedded network isometry for every flattened parameter.
    fn isometry_derivatives(&self, fwd: &Forward) -> Vec<ComplexMatrix> {
        let mut out = Vec::with_capacity(self.param_count());
        for (m, p) in self.params.iter().enumerate() {
            for d_local in isometry_jacobian(p) {
                let dw = self.embed_local(m, &d_local);
                out.push(&fwd.suffix[m] * dw * &fwd.prefix[m]);
            }
        }
        out
    }

    /// `d rho_out / d lambda^{(m)}_{x,y}` for an active entry.
    ///
    /// Equals `tr_env{ ... U_{m+1} U_m i[Y~, U_{m-1} ... rho~ ...] U_m^dagger ... }`; it is
    /// evaluated as `tr_env(dV rho V^dagger + V rho dV^dagger)` with
    /// `dV = W_M ... W_{m+1} dW_m W_{m-1} ... W_1`.
    pub fn output_gradient(
        &self,
        rho_in: &ComplexMatrix,
        perceptron: usize,
        x: usize,
        y: usize,
    ) -> Result<ComplexMatrix> {
        expect_square(rho_in, self.input_dim())?;
        let p = self.params.get(perceptron).ok_or_else(|| {
            Error::InvalidParameter(format!("no perceptron with index {perceptron}"))
        })?;
        let local = crate::isometry::isometry_derivative(p, x, y)?;
        let fwd = self.forward();
        let dv = &fwd.suffix[perceptron] * self.embed_local(perceptron, &local) * &fwd.prefix[perceptron];
        Ok(derivative_of_output(&fwd.total, &dv, rho_in, self.output_dim()))
    }

    /// Output state and its derivative for every flattened parameter.
    pub fn output_with_gradients(
        &self,
        rho_in: &ComplexMatrix,
    ) -> Result<(ComplexMatrix, Vec<ComplexMatrix>)> {
        expect_square(rho_in, self.input_dim())?;
        let fwd = self.forward();
        let d_out = self.output_dim();
        let rho_out = reduce_to_output(&fwd.total, &fwd.total, rho_in, d_out);
        let grads = self
            .isometry_derivatives(&fwd)
            .iter()
            .map(|dv| derivative_of_output(&fwd.total, dv, rho_in, d_out))
            .collect();
        Ok((rho_out, grads))
    }

    /// Output states and derivatives for a batch of inputs, sharing the forward pass.
    pub fn outputs_with_gradients(
        &self,
        inputs: &[ComplexMatrix],
    ) -> Result<Vec<(ComplexMatrix, Vec<ComplexMatrix>)>> {
        for rho in inputs {
            expect_square(rho, self.input_dim())?;
        }
        let fwd = self.forward();
        let d_out = self.output_dim();
        let dvs = self.isometry_derivatives(&fwd);
        Ok(inputs
            .iter()
            .map(|rho| {
                let out = reduce_to_output(&fwd.total, &fwd.total, rho, d_out);
                let grads = dvs
                    .iter()
                    .map(|dv| derivative_of_output(&fwd.total, dv, rho, d_out))
                    .collect();
                (out, grads)
            })
            .collect())
    }

    /// Choi state and its derivative for every flattened parameter.
    pub fn choi_with_gradients(&self) -> (ComplexMatrix, Vec<ComplexMatrix>) {
        let fwd = self.forward();
        let (d_in, d_out) = (self.input_dim(), self.output_dim());
        let j = choi_from_isometry_pair(&fwd.total, &fwd.total, d_in, d_out);
        let grads = self
            .isometry_derivatives(&fwd)
            .iter()
            .map(|dv| {
                let half = choi_from_isometry_pair(dv, &fwd.total, d_in, d_out);
                &half + half.adjoint()
            })
            .collect();
        (j, grads)
    }

    /// Output of the unitary formulation: all non-input neurons start in `|0>`,
    /// `unitaries[m]` acts on `added (x) source` of perceptron `m`, and every
    /// non-output layer is traced out at the end.
    pub fn unitary_formulation_output(
        arch: &Architecture,
        unitaries: &[ComplexMatrix],
        rho_in: &ComplexMatrix,
    ) -> Result<ComplexMatrix> {
        let u = Self::unitary_formulation_total(arch, unitaries)?;
        expect_square(rho_in, arch.input_dim())?;
        let d_total = u.nrows();
        let d_in = arch.input_dim();
        // |0...0><0...0| (x) rho_in sits in the top-left d_in x d_in block
        let mut big = ComplexMatrix::zeros(d_total, d_total);
        big.view_mut((0, 0), (d_in, d_in)).copy_from(rho_in);
        let evolved = &u * big * u.adjoint();
        let layout = arch.full_layout();
        let dims: Vec<usize> = layout.iter().map(|&n| arch.neuron_dim(n)).collect();
        let last = arch.layers.len() - 1;
        let keep: Vec<usize> = (0..layout.len()).filter(|&i| layout[i].0 == last).collect();
        partial_trace(&evolved, &dims, &keep)
    }

    /// `U_M ... U_1` on the full network space.
    pub fn unitary_formulation_total(
        arch: &Architecture,
        unitaries: &[ComplexMatrix],
    ) -> Result<ComplexMatrix> {
        if unitaries.len() != arch.perceptrons.len() {
            return Err(Error::DimensionMismatch {
                expected: arch.perceptrons.len(),
                actual: unitaries.len(),
            });
        }
        let layout = arch.full_layout();
        let d_total: usize = layout.iter().map(|&n| arch.neuron_dim(n)).product();
        let mut total = tensor::identity(d_total);
        for (p, u) in arch.perceptrons.iter().zip(unitaries) {
            expect_square(u, p.d_out)?;
            let mut local = p.added.clone();
            local.extend(arch.source_neurons(p));
            let w = embed_operator(u, &local, &local, &layout, &layout, |n| arch.neuron_dim(n));
            total = w * total;
        }
        Ok(total)
    }
}

/// `tr_env(A rho B^dagger)` for maps with the output factor first.
fn reduce_to_output(a: &ComplexMatrix, b: &ComplexMatrix, rho: &ComplexMatrix, d_out: usize) -> ComplexMatrix {
    let env = a.nrows() / d_out;
    let ar = a * rho;
    let mut out = ComplexMatrix::zeros(d_out, d_out);
    for o2 in 0..d_out {
        for o1 in 0..d_out {
            let mut acc = ZERO;
            for e in 0..env {
                let r1 = o1 * env + e;
                let r2 = o2 * env + e;
                for k in 0..a.ncols() {
                    acc += ar[(r1, k)] * b[(r2, k)].conj();
                }
            }
            out[(o1, o2)] = acc;
        }
    }
    out
}

fn derivative_of_output(v: &ComplexMatrix, dv: &ComplexMatrix, rho: &ComplexMatrix, d_out: usize) -> ComplexMatrix {
    let half = reduce_to_output(dv, v, rho, d_out);
    &half + half.adjoint()
}

/// `(1/d_in) sum_e |A_e>> <<B_e|` with `A_e = (I (x) <e|) A`.
fn choi_from_isometry_pair(a: &ComplexMatrix, b: &ComplexMatrix, d_in: usize, d_out: usize) -> ComplexMatrix {
    let env = a.nrows() / d_out;
    let n = d_out * d_in;
    let mut j = ComplexMatrix::zeros(n, n);
    for e in 0..env {
        let ka = ComplexMatrix::from_fn(d_out, d_in, |o, i| a[(o * env + e, i)]);
        let kb = ComplexMatrix::from_fn(d_out, d_in, |o, i| b[(o * env + e, i)]);
        let va = vec_row_major(&ka);
        let vb = vec_row_major(&kb);
        j += va * vb.adjoint();
    }
    j / C64::new(d_in as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_density_hs, rng_from_seed, Rng};
    use crate::isometry::build_unitary;
    use crate::tensor::{identity, is_density_matrix, kron, max_abs_diff, trace, ComplexVector, ONE};
    use rand::Rng as _;

    fn randomize(net: &Network, scale: f64, rng: &mut Rng) -> Network {
        let flat: Vec<f64> = (0..net.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
        net.with_flat_params(&flat).unwrap()
    }

    fn two_hidden_arch() -> Architecture {
        Architecture::extended(vec![vec![2, 2], vec![2, 2, 2], vec![2, 2]], None).unwrap()
    }

    #[test]
    fn minimal_extended_layout() {
        let arch = Architecture::minimal_extended(2);
        assert_eq!(arch.layers().len(), 3);
        assert_eq!(arch.perceptrons().len(), 1);
        assert_eq!(arch.perceptrons()[0].d_in, 2);
        assert_eq!(arch.perceptrons()[0].d_out, 8);
        assert_eq!(arch.full_layout(), vec![(2, 0), (1, 0), (0, 0)]);
        assert_eq!(arch.param_count(), 28);
    }

    #[test]
    fn zero_params_embed_canonically() {
        let net = Network::new(Architecture::minimal_extended(2));
        let v = net.assemble_isometry();
        // V|i> = |0>_out |0>_anc |i>_in
        for i in 0..2 {
            for r in 0..8 {
                let expected = if r == i { ONE } else { ZERO };
                assert_eq!(v[(r, i)], expected);
            }
        }
        let mut rng = rng_from_seed(1);
        let rho = random_density_hs(2, &mut rng);
        let out = net.apply(&rho).unwrap();
        assert!(max_abs_diff(&out, &crate::tensor::outer_basis(2, 0, 0)) < 1e-15);
        let j = net.choi_state();
        let expected = kron(&crate::tensor::outer_basis(2, 0, 0), &(identity(2) * C64::new(0.5, 0.0)));
        assert!(max_abs_diff(&j, &expected) < 1e-15);
    }

    #[test]
    fn two_hidden_isometry_property() {
        let mut rng = rng_from_seed(2);
        let net = randomize(&Network::new(two_hidden_arch()), 3.0, &mut rng);
        let v = net.assemble_isometry();
        assert_eq!(v.ncols(), 4);
        assert_eq!(v.nrows(), 1 << 12);
        let vv = v.adjoint() * &v;
        assert!(max_abs_diff(&vv, &identity(4)) < 1e-10);
    }

    #[test]
    fn identity_channel_is_reachable() {
        // A perceptron isometry with V|i> = |i>_out |0>_anc |0>_in realizes the identity.
        let arch = Architecture::minimal_extended(2);
        let mut p = ParamMatrix::zeros(2, 8).unwrap();
        // |1>_in (index 1) should map to |1>_out|0>|0> (index 4): a rotation in the (1, 4) plane,
        // lambda_{1,4} = pi/2 gives row1 <- row4 and row4 <- -row1.
        p.set(1, 4, std::f64::consts::FRAC_PI_2).unwrap();
        // fix the sign picked up on |4>
        p.set(4, 1, std::f64::consts::PI).unwrap();
        let net = Network::with_params(arch, vec![p]).unwrap();
        let v = net.assemble_isometry();
        assert!((v[(0, 0)] - ONE).norm() < 1e-15);
        assert!((v[(4, 1)] - ONE).norm() < 1e-15);
        let mut rng = rng_from_seed(3);
        let s = 0.5f64.sqrt();
        let psi = ComplexVector::from_vec(vec![C64::new(s, 0.0), C64::new(0.0, s)]);
        let pure = crate::tensor::projector(&psi);
        assert!(max_abs_diff(&net.apply(&pure).unwrap(), &pure) < 1e-14);
        let rho = random_density_hs(2, &mut rng);
        assert!(max_abs_diff(&net.apply(&rho).unwrap(), &rho) < 1e-14);
        let omega = ComplexVector::from_vec(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        assert!(max_abs_diff(&net.choi_state(), &crate::tensor::projector(&omega)) < 1e-14);
    }

    #[test]
    fn conventional_matches_unitary_formulation() {
        // two perceptrons: input -> hidden -> output, one neuron each
        let arch = Architecture::conventional(vec![vec![2], vec![2], vec![2]]).unwrap();
        let mut rng = rng_from_seed(4);
        let mut unitaries = Vec::new();
        let mut params = Vec::new();
        for p in arch.perceptrons() {
            let full: Vec<f64> = (0..p.d_out * p.d_out).map(|_| rng.random_range(-3.0..3.0)).collect();
            let up = ParamMatrix::from_full_masked(p.d_out, p.d_out, &full).unwrap();
            unitaries.push(build_unitary(&up).unwrap());
            params.push(ParamMatrix::from_full_masked(p.d_in, p.d_out, &full).unwrap());
        }
        let net = Network::with_params(arch.clone(), params).unwrap();
        let u = Network::unitary_formulation_total(&arch, &unitaries).unwrap();
        // U2 U1 (|0>|0> (x) I): first d_in columns
        let restricted = u.columns(0, 2).into_owned();
        assert!(max_abs_diff(&restricted, &net.assemble_isometry()) < 1e-12);
        for _ in 0..5 {
            let rho = random_density_hs(2, &mut rng);
            let a = net.apply(&rho).unwrap();
            let b = Network::unitary_formulation_output(&arch, &unitaries, &rho).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-10);
        }
    }

    #[test]
    fn conventional_multi_neuron_matches_unitary_formulation() {
        let arch = Architecture::conventional(vec![vec![2], vec![2, 2], vec![2]]).unwrap();
        assert_eq!(arch.perceptrons().len(), 3);
        let mut rng = rng_from_seed(5);
        let mut unitaries = Vec::new();
        let mut params = Vec::new();
        for p in arch.perceptrons() {
            let full: Vec<f64> = (0..p.d_out * p.d_out).map(|_| rng.random_range(-3.0..3.0)).collect();
            unitaries.push(build_unitary(&ParamMatrix::from_full_masked(p.d_out, p.d_out, &full).unwrap()).unwrap());
            params.push(ParamMatrix::from_full_masked(p.d_in, p.d_out, &full).unwrap());
        }
        let net = Network::with_params(arch.clone(), params).unwrap();
        for _ in 0..3 {
            let rho = random_density_hs(2, &mut rng);
            let a = net.apply(&rho).unwrap();
            let b = Network::unitary_formulation_output(&arch, &unitaries, &rho).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-10);
        }
    }

    #[test]
    fn kraus_completeness_and_action() {
        let mut rng = rng_from_seed(6);
        for arch in [Architecture::minimal_extended(2), two_hidden_arch()] {
            let net = randomize(&Network::new(arch), 3.0, &mut rng);
            let ops = net.kraus_operators();
            let d_in = net.input_dim();
            let mut sum = ComplexMatrix::zeros(d_in, d_in);
            for g in &ops {
                sum += g.adjoint() * g;
            }
            assert!(max_abs_diff(&sum, &identity(d_in)) < 1e-10);
            let rho = random_density_hs(d_in, &mut rng);
            let via_kraus = crate::channels::apply_kraus(&ops, &rho);
            let out = net.apply(&rho).unwrap();
            assert!(max_abs_diff(&via_kraus, &out) < 1e-10);
            assert!(is_density_matrix(&out, 1e-9));
        }
    }

    #[test]
    fn zero_kraus_pattern() {
        let net = Network::new(Architecture::minimal_extended(2));
        let ops = net.kraus_operators();
        assert_eq!(ops.len(), 4);
        // G_{(anc k, in l)} = <k|_anc <l|_in V: only k = 0 survives, G_{0,l} = |0><l|
        for (e, g) in ops.iter().enumerate() {
            let (k, l) = (e / 2, e % 2);
            let mut expected = ComplexMatrix::zeros(2, 2);
            if k == 0 {
                expected[(0, l)] = ONE;
            }
            assert_eq!(*g, expected);
        }
    }

    #[test]
    fn choi_matches_operational_construction() {
        let mut rng = rng_from_seed(7);
        let net = randomize(&Network::new(Architecture::minimal_extended(2)), 3.0, &mut rng);
        let j = net.choi_state();
        // send the first half of |Omega> (on in (x) ref) through the network
        let s = 0.5f64.sqrt();
        let omega = ComplexVector::from_vec(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        let v = net.assemble_isometry();
        let big = kron(&v, &identity(2)) * crate::tensor::projector(&omega) * kron(&v, &identity(2)).adjoint();
        // factors: out, anc, in, ref
        let reduced = partial_trace(&big, &[2, 2, 2, 2], &[0, 3]).unwrap();
        assert!(max_abs_diff(&reduced, &j) < 1e-10);
        let marginal = partial_trace(&j, &[2, 2], &[1]).unwrap();
        assert!(max_abs_diff(&marginal, &(identity(2) * C64::new(0.5, 0.0))) < 1e-10);
        assert!((trace(&j).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_rejects_bad_input() {
        let net = Network::new(Architecture::minimal_extended(2));
        assert!(net.apply(&identity(3)).is_err());
        assert!(net.apply(&ComplexMatrix::zeros(2, 3)).is_err());
        assert!(net.output_gradient(&identity(2), 0, 2, 3).is_err());
        assert!(net.output_gradient(&identity(2), 1, 0, 0).is_err());
    }

    fn finite_difference_output(net: &Network, rho: &ComplexMatrix, k: usize, eps: f64) -> ComplexMatrix {
        let mut plus = net.flat_params();
        let mut minus = plus.clone();
        plus[k] += eps;
        minus[k] -= eps;
        let a = net.with_flat_params(&plus).unwrap().apply(rho).unwrap();
        let b = net.with_flat_params(&minus).unwrap().apply(rho).unwrap();
        (a - b) / C64::new(2.0 * eps, 0.0)
    }

    #[test]
    fn output_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(8);
        for arch in [
            Architecture::minimal_extended(2),
            Architecture::extended(vec![vec![2], vec![2], vec![2]], None).unwrap(),
            Architecture::conventional(vec![vec![2], vec![2, 2], vec![2]]).unwrap(),
        ] {
            let net = randomize(&Network::new(arch), 3.0, &mut rng);
            let rho = random_density_hs(net.input_dim(), &mut rng);
            let (_, grads) = net.output_with_gradients(&rho).unwrap();
            for (k, loc) in net.param_locations().into_iter().enumerate() {
                let fd = finite_difference_output(&net, &rho, k, 1e-6);
                assert!(max_abs_diff(&fd, &grads[k]) < 1e-6, "param {loc:?}");
                assert!(trace(&grads[k]).norm() < 1e-10);
                assert!(max_abs_diff(&grads[k], &grads[k].adjoint()) < 1e-12);
                let single = net.output_gradient(&rho, loc.perceptron, loc.x, loc.y).unwrap();
                assert!(max_abs_diff(&single, &grads[k]) < 1e-12);
            }
        }
    }

    #[test]
    fn choi_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(9);
        let net = randomize(&Network::new(Architecture::minimal_extended(2)), 3.0, &mut rng);
        let (_, grads) = net.choi_with_gradients();
        let eps = 1e-6;
        for k in 0..net.param_count() {
            let mut plus = net.flat_params();
            let mut minus = plus.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let fd = (net.with_flat_params(&plus).unwrap().choi_state()
                - net.with_flat_params(&minus).unwrap().choi_state())
                / C64::new(2.0 * eps, 0.0);
            assert!(max_abs_diff(&fd, &grads[k]) < 1e-7);
        }
    }

    #[test]
    fn diagonal_derivative_vanishes_for_commuting_input() {
        // at lambda = 0, P_x commutes with rho~ = |00><00| (x) rho for diagonal rho
        let net = Network::new(Architecture::minimal_extended(2));
        let rho = crate::tensor::diag(&[0.3, 0.7]);
        for x in 0..2 {
            let g = net.output_gradient(&rho, 0, x, x).unwrap();
            assert!(g.iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn output_gradient_is_linear_in_input() {
        let mut rng = rng_from_seed(10);
        let net = randomize(&Network::new(Architecture::minimal_extended(2)), 3.0, &mut rng);
        let a = random_density_hs(2, &mut rng);
        let b = random_density_hs(2, &mut rng);
        let t = 0.3;
        let mix = &a * C64::new(t, 0.0) + &b * C64::new(1.0 - t, 0.0);
        for (m, x, y) in [(0, 0, 5), (0, 6, 1), (0, 1, 1)] {
            let ga = net.output_gradient(&a, m, x, y).unwrap();
            let gb = net.output_gradient(&b, m, x, y).unwrap();
            let gm = net.output_gradient(&mix, m, x, y).unwrap();
            let lin = ga * C64::new(t, 0.0) + gb * C64::new(1.0 - t, 0.0);
            assert!(max_abs_diff(&gm, &lin) < 1e-13);
        }
    }

    #[test]
    fn spec_roundtrip_and_validation() {
        let spec: ArchitectureSpec =
            serde_json::from_str(r#"{"style":"extended","layers":[[2],[2]]}"#).unwrap();
        assert_eq!(Architecture::from_spec(&spec).unwrap(), Architecture::minimal_extended(2));
        assert!(serde_json::from_str::<ArchitectureSpec>(r#"{"style":"extended","layers":[[2]],"x":1}"#).is_err());
        assert!(Architecture::conventional(vec![vec![2]]).is_err());
        assert!(Architecture::extended(vec![vec![2], vec![2]], Some(vec![vec![2], vec![2]])).is_err());
        let custom = Architecture::extended(vec![vec![2], vec![2]], Some(vec![vec![3]])).unwrap();
        assert_eq!(custom.perceptrons()[0].d_out, 12);
    }
}
