//! Alice, Bob and Eve assembled from the projection layers.
//!
//! Topology (P = projection, D = dot-product, T = transform, P̄ = inverse
//! projection):
//!
//! ```text
//! Alice:  x ─P─D─┐                 ┌─P̄→ x̂_A
//!                T─D───────────────┼─P̄→ y
//!         k ─P─D─┘                 └─P̄→ k̂_A
//! Bob:    y ─P─D─┐                 ┌─P̄→ x̂_B
//!                T─D───────────────┤
//!         k ─P─D─┘                 └─P̄→ k̂_B
//! Eve:    y ─P─D─P̄→ x̂_E
//! ```
//!
//! Parameter counts, with `P` the projection width and `N` the bit count:
//! a projection layer holds `2P`, dot-product and inverse-projection layers
//! hold `2NP` each, so
//!
//! * Alice: 2 projections, 3 dot-products, 3 heads = `4P + 12NP`
//! * Bob:   2 projections, 3 dot-products, 2 heads = `4P + 10NP`
//! * Eve:   1 projection, 1 dot-product, 1 head    = `2P + 4NP`

mod io;

pub use io::{MAGIC, FORMAT_VERSION};

use rand::Rng;

use crate::autodiff::{AdamConfig, Parameter, Real, Tape, Tensor, Var};
use crate::error::{AncError, Result};
use crate::layers::{
    transform_on_tape, BoundDotProduct, INIT_SCALE, BoundInverseProjection, BoundProjection, DotProductLayer,
    InverseProjectionLayer, Mode, ProjectionLayer,
};

/// Shared parameter bookkeeping for the three networks.
pub trait Network<T: Real> {
    /// Parameters in their fixed serialization order.
    fn params(&self) -> Vec<&Parameter<T>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Pulls gradients for `vars` (as returned by the matching `bind`) off `tape`.
    fn absorb_grads(&mut self, tape: &Tape<T>, vars: &[Var]) {
        for (p, &v) in self.params_mut().into_iter().zip(vars) {
            p.accumulate_grad(tape, v);
        }
    }

    fn zero_grads(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// One ADAM step on every parameter, then clears the gradients.
    fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for p in self.params_mut() {
            cfg.step(p)?;
            p.zero_grad();
        }
        Ok(())
    }
}

/// The encryption network.
#[derive(Clone, Debug, PartialEq)]
pub struct AliceNet<T = f32> {
    pub msg_proj: ProjectionLayer<T>,
    pub msg_dot: DotProductLayer<T>,
    pub key_proj: ProjectionLayer<T>,
    pub key_dot: DotProductLayer<T>,
    pub post_dot: DotProductLayer<T>,
    pub head_x: InverseProjectionLayer<T>,
    pub head_y: InverseProjectionLayer<T>,
    pub head_k: InverseProjectionLayer<T>,
}

/// The decryption network.
#[derive(Clone, Debug, PartialEq)]
pub struct BobNet<T = f32> {
    pub cipher_proj: ProjectionLayer<T>,
    pub cipher_dot: DotProductLayer<T>,
    pub key_proj: ProjectionLayer<T>,
    pub key_dot: DotProductLayer<T>,
    pub post_dot: DotProductLayer<T>,
    pub head_x: InverseProjectionLayer<T>,
    pub head_k: InverseProjectionLayer<T>,
}

/// The eavesdropper: ciphertext only.
#[derive(Clone, Debug, PartialEq)]
pub struct EveNet<T = f32> {
    pub proj: ProjectionLayer<T>,
    pub dot: DotProductLayer<T>,
    pub inv: InverseProjectionLayer<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AliceOutput<V> {
    pub x_hat: V,
    pub y: V,
    pub k_hat: V,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BobOutput<V> {
    pub x_hat: V,
    pub k_hat: V,
}

/// Two-input trunk shared by Alice and Bob: `T(D(P(a)), D(P(b)))` then `D`.
struct BoundTrunk {
    a_proj: BoundProjection,
    a_dot: BoundDotProduct,
    b_proj: BoundProjection,
    b_dot: BoundDotProduct,
    post: BoundDotProduct,
}

impl BoundTrunk {
    fn forward<T: Real>(&self, tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
        let pa = self.a_proj.forward(tape, a)?;
        let da = self.a_dot.forward(tape, pa)?;
        let pb = self.b_proj.forward(tape, b)?;
        let db = self.b_dot.forward(tape, pb)?;
        let merged = transform_on_tape(tape, da, db)?;
        self.post.forward(tape, merged)
    }
}

pub struct BoundAlice {
    trunk: BoundTrunk,
    head_x: BoundInverseProjection,
    head_y: BoundInverseProjection,
    head_k: BoundInverseProjection,
    vars: Vec<Var>,
}

pub struct BoundBob {
    trunk: BoundTrunk,
    head_x: BoundInverseProjection,
    head_k: BoundInverseProjection,
    vars: Vec<Var>,
}

pub struct BoundEve {
    proj: BoundProjection,
    dot: BoundDotProduct,
    inv: BoundInverseProjection,
    vars: Vec<Var>,
}

impl BoundAlice {
    /// `x`, `k`: `R×N_b` signal batches.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, k: Var) -> Result<AliceOutput<Var>> {
        let h = self.trunk.forward(tape, x, k)?;
        Ok(AliceOutput {
            x_hat: self.head_x.forward(tape, h)?,
            y: self.head_y.forward(tape, h)?,
            k_hat: self.head_k.forward(tape, h)?,
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl BoundBob {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, y: Var, k: Var) -> Result<BobOutput<Var>> {
        let h = self.trunk.forward(tape, y, k)?;
        Ok(BobOutput {
            x_hat: self.head_x.forward(tape, h)?,
            k_hat: self.head_k.forward(tape, h)?,
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl BoundEve {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, y: Var) -> Result<Var> {
        let p = self.proj.forward(tape, y)?;
        let d = self.dot.forward(tape, p)?;
        self.inv.forward(tape, d)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

fn check_batch<T: Real>(op: &'static str, t: &Tensor<T>, n_bits: usize) -> Result<()> {
    if t.cols() != n_bits {
        return Err(AncError::Shape {
            op,
            left: t.shape(),
            right: (t.rows(), n_bits),
        });
    }
    Ok(())
}

fn check_same_rows<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(AncError::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn signal_row<T: Real>(op: &'static str, v: &[T], n_bits: usize) -> Result<Tensor<T>> {
    if v.len() != n_bits {
        return Err(AncError::Shape {
            op,
            left: (1, v.len()),
            right: (1, n_bits),
        });
    }
    Ok(Tensor::row(v.to_vec()))
}

impl<T: Real> AliceNet<T> {
    pub fn random<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(n_bits, n_proj, INIT_SCALE, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            msg_proj: ProjectionLayer::random_scaled("alice.msg_proj", n_proj, scale, rng),
            msg_dot: DotProductLayer::random_scaled("alice.msg_dot", n_bits, n_proj, scale, rng),
            key_proj: ProjectionLayer::random_scaled("alice.key_proj", n_proj, scale, rng),
            key_dot: DotProductLayer::random_scaled("alice.key_dot", n_bits, n_proj, scale, rng),
            post_dot: DotProductLayer::random_scaled("alice.post_dot", n_bits, n_proj, scale, rng),
            head_x: InverseProjectionLayer::random_scaled("alice.head_x", n_bits, n_proj, scale, rng),
            head_y: InverseProjectionLayer::random_scaled("alice.head_y", n_bits, n_proj, scale, rng),
            head_k: InverseProjectionLayer::random_scaled("alice.head_k", n_bits, n_proj, scale, rng),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.post_dot.shape()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode) -> BoundAlice {
        let mut vars = Vec::new();
        let trunk = BoundTrunk {
            a_proj: self.msg_proj.bind(tape, mode, &mut vars),
            a_dot: self.msg_dot.bind(tape, mode, &mut vars),
            b_proj: self.key_proj.bind(tape, mode, &mut vars),
            b_dot: self.key_dot.bind(tape, mode, &mut vars),
            post: self.post_dot.bind(tape, mode, &mut vars),
        };
        BoundAlice {
            trunk,
            head_x: self.head_x.bind(tape, mode, &mut vars),
            head_y: self.head_y.bind(tape, mode, &mut vars),
            head_k: self.head_k.bind(tape, mode, &mut vars),
            vars,
        }
    }

    /// Batched forward pass on `R×N_b` message and key signals.
    pub fn forward_batch(&self, x: &Tensor<T>, k: &Tensor<T>) -> Result<AliceOutput<Tensor<T>>> {
        let n_bits = self.dims().0;
        check_batch("alice_forward", x, n_bits)?;
        check_batch("alice_forward", k, n_bits)?;
        check_same_rows("alice_forward", x, k)?;
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, Mode::Frozen);
        let (xv, kv) = (tape.constant(x), tape.constant(k));
        let out = net.forward(&mut tape, xv, kv)?;
        Ok(AliceOutput {
            x_hat: tape.tensor(out.x_hat),
            y: tape.tensor(out.y),
            k_hat: tape.tensor(out.k_hat),
        })
    }

    /// Ciphertext signal only; skips the two reconstruction heads.
    pub fn encrypt_batch(&self, x: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
        let n_bits = self.dims().0;
        check_batch("alice_forward", x, n_bits)?;
        check_batch("alice_forward", k, n_bits)?;
        check_same_rows("alice_forward", x, k)?;
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, Mode::Frozen);
        let (xv, kv) = (tape.constant(x), tape.constant(k));
        let h = net.trunk.forward(&mut tape, xv, kv)?;
        let y = net.head_y.forward(&mut tape, h)?;
        Ok(tape.tensor(y))
    }

    pub fn forward(&self, x: &[T], k: &[T]) -> Result<AliceOutput<Vec<T>>> {
        let n_bits = self.dims().0;
        let out = self.forward_batch(
            &signal_row("alice_forward", x, n_bits)?,
            &signal_row("alice_forward", k, n_bits)?,
        )?;
        Ok(AliceOutput {
            x_hat: out.x_hat.into_values(),
            y: out.y.into_values(),
            k_hat: out.k_hat.into_values(),
        })
    }

    pub fn cast<U: Real>(&self) -> AliceNet<U> {
        AliceNet {
            msg_proj: self.msg_proj.cast(),
            msg_dot: self.msg_dot.cast(),
            key_proj: self.key_proj.cast(),
            key_dot: self.key_dot.cast(),
            post_dot: self.post_dot.cast(),
            head_x: self.head_x.cast(),
            head_y: self.head_y.cast(),
            head_k: self.head_k.cast(),
        }
    }
}

impl<T: Real> Network<T> for AliceNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = Vec::with_capacity(16);
        v.extend(self.msg_proj.params());
        v.extend(self.msg_dot.params());
        v.extend(self.key_proj.params());
        v.extend(self.key_dot.params());
        v.extend(self.post_dot.params());
        v.extend(self.head_x.params());
        v.extend(self.head_y.params());
        v.extend(self.head_k.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = Vec::with_capacity(16);
        v.extend(self.msg_proj.params_mut());
        v.extend(self.msg_dot.params_mut());
        v.extend(self.key_proj.params_mut());
        v.extend(self.key_dot.params_mut());
        v.extend(self.post_dot.params_mut());
        v.extend(self.head_x.params_mut());
        v.extend(self.head_y.params_mut());
        v.extend(self.head_k.params_mut());
        v
    }
}

impl<T: Real> BobNet<T> {
    pub fn random<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(n_bits, n_proj, INIT_SCALE, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            cipher_proj: ProjectionLayer::random_scaled("bob.cipher_proj", n_proj, scale, rng),
            cipher_dot: DotProductLayer::random_scaled("bob.cipher_dot", n_bits, n_proj, scale, rng),
            key_proj: ProjectionLayer::random_scaled("bob.key_proj", n_proj, scale, rng),
            key_dot: DotProductLayer::random_scaled("bob.key_dot", n_bits, n_proj, scale, rng),
            post_dot: DotProductLayer::random_scaled("bob.post_dot", n_bits, n_proj, scale, rng),
            head_x: InverseProjectionLayer::random_scaled("bob.head_x", n_bits, n_proj, scale, rng),
            head_k: InverseProjectionLayer::random_scaled("bob.head_k", n_bits, n_proj, scale, rng),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.post_dot.shape()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode) -> BoundBob {
        let mut vars = Vec::new();
        let trunk = BoundTrunk {
            a_proj: self.cipher_proj.bind(tape, mode, &mut vars),
            a_dot: self.cipher_dot.bind(tape, mode, &mut vars),
            b_proj: self.key_proj.bind(tape, mode, &mut vars),
            b_dot: self.key_dot.bind(tape, mode, &mut vars),
            post: self.post_dot.bind(tape, mode, &mut vars),
        };
        BoundBob {
            trunk,
            head_x: self.head_x.bind(tape, mode, &mut vars),
            head_k: self.head_k.bind(tape, mode, &mut vars),
            vars,
        }
    }

    pub fn forward_batch(&self, y: &Tensor<T>, k: &Tensor<T>) -> Result<BobOutput<Tensor<T>>> {
        let n_bits = self.dims().0;
        check_batch("bob_forward", y, n_bits)?;
        check_batch("bob_forward", k, n_bits)?;
        check_same_rows("bob_forward", y, k)?;
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, Mode::Frozen);
        let (yv, kv) = (tape.constant(y), tape.constant(k));
        let out = net.forward(&mut tape, yv, kv)?;
        Ok(BobOutput {
            x_hat: tape.tensor(out.x_hat),
            k_hat: tape.tensor(out.k_hat),
        })
    }

    /// Message estimate only.
    pub fn decrypt_batch(&self, y: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
        let n_bits = self.dims().0;
        check_batch("bob_forward", y, n_bits)?;
        check_batch("bob_forward", k, n_bits)?;
        check_same_rows("bob_forward", y, k)?;
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, Mode::Frozen);
        let (yv, kv) = (tape.constant(y), tape.constant(k));
        let h = net.trunk.forward(&mut tape, yv, kv)?;
        let x = net.head_x.forward(&mut tape, h)?;
        Ok(tape.tensor(x))
    }

    pub fn forward(&self, y: &[T], k: &[T]) -> Result<BobOutput<Vec<T>>> {
        let n_bits = self.dims().0;
        let out = self.forward_batch(
            &signal_row("bob_forward", y, n_bits)?,
            &signal_row("bob_forward", k, n_bits)?,
        )?;
        Ok(BobOutput {
            x_hat: out.x_hat.into_values(),
            k_hat: out.k_hat.into_values(),
        })
    }

    pub fn cast<U: Real>(&self) -> BobNet<U> {
        BobNet {
            cipher_proj: self.cipher_proj.cast(),
            cipher_dot: self.cipher_dot.cast(),
            key_proj: self.key_proj.cast(),
            key_dot: self.key_dot.cast(),
            post_dot: self.post_dot.cast(),
            head_x: self.head_x.cast(),
            head_k: self.head_k.cast(),
        }
    }
}

impl<T: Real> Network<T> for BobNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = Vec::with_capacity(14);
        v.extend(self.cipher_proj.params());
        v.extend(self.cipher_dot.params());
        v.extend(self.key_proj.params());
        v.extend(self.key_dot.params());
        v.extend(self.post_dot.params());
        v.extend(self.head_x.params());
        v.extend(self.head_k.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = Vec::with_capacity(14);
        v.extend(self.cipher_proj.params_mut());
        v.extend(self.cipher_dot.params_mut());
        v.extend(self.key_proj.params_mut());
        v.extend(self.key_dot.params_mut());
        v.extend(self.post_dot.params_mut());
        v.extend(self.head_x.params_mut());
        v.extend(self.head_k.params_mut());
        v
    }
}

impl<T: Real> EveNet<T> {
    pub fn random<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, rng: &mut R) -> Self {
        Self::random_scaled(n_bits, n_proj, INIT_SCALE, rng)
    }

    pub fn random_scaled<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            proj: ProjectionLayer::random_scaled("eve.proj", n_proj, scale, rng),
            dot: DotProductLayer::random_scaled("eve.dot", n_bits, n_proj, scale, rng),
            inv: InverseProjectionLayer::random_scaled("eve.inv", n_bits, n_proj, scale, rng),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dot.shape()
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode) -> BoundEve {
        let mut vars = Vec::new();
        BoundEve {
            proj: self.proj.bind(tape, mode, &mut vars),
            dot: self.dot.bind(tape, mode, &mut vars),
            inv: self.inv.bind(tape, mode, &mut vars),
            vars,
        }
    }

    pub fn forward_batch(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        check_batch("eve_forward", y, self.dims().0)?;
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, Mode::Frozen);
        let yv = tape.constant(y);
        let out = net.forward(&mut tape, yv)?;
        Ok(tape.tensor(out))
    }

    pub fn forward(&self, y: &[T]) -> Result<Vec<T>> {
        let row = signal_row("eve_forward", y, self.dims().0)?;
        Ok(self.forward_batch(&row)?.into_values())
    }

    pub fn cast<U: Real>(&self) -> EveNet<U> {
        EveNet {
            proj: self.proj.cast(),
            dot: self.dot.cast(),
            inv: self.inv.cast(),
        }
    }
}

impl<T: Real> Network<T> for EveNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = Vec::with_capacity(6);
        v.extend(self.proj.params());
        v.extend(self.dot.params());
        v.extend(self.inv.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = Vec::with_capacity(6);
        v.extend(self.proj.params_mut());
        v.extend(self.dot.params_mut());
        v.extend(self.inv.params_mut());
        v
    }
}

pub fn alice_param_count(n_bits: usize, n_proj: usize) -> usize {
    4 * n_proj + 12 * n_bits * n_proj
}

pub fn bob_param_count(n_bits: usize, n_proj: usize) -> usize {
    4 * n_proj + 10 * n_bits * n_proj
}

pub fn eve_param_count(n_bits: usize, n_proj: usize) -> usize {
    2 * n_proj + 4 * n_bits * n_proj
}

/// A trained (or training) Alice/Bob pair with optional Eve and metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct AncModel {
    pub alice: AliceNet<f32>,
    pub bob: BobNet<f32>,
    /// Present while training and in bundles written with Eve included.
    pub eve: Option<EveNet<f32>>,
    pub n_bits: usize,
    pub n_proj: usize,
    pub seed: u64,
    /// Sidelobe tolerance of the key pool the model was trained with.
    pub psl_tolerance: u32,
    pub converged: bool,
    pub training_epochs: u32,
}

impl AncModel {
    pub fn random<R: Rng + ?Sized>(n_bits: usize, n_proj: usize, psl_tolerance: u32, seed: u64, rng: &mut R) -> Self {
        Self::random_scaled(n_bits, n_proj, psl_tolerance, seed, INIT_SCALE, rng)
    }

    /// Fresh untrained trio with weights from `uniform(-scale, scale)`.
    pub fn random_scaled<R: Rng + ?Sized>(
        n_bits: usize,
        n_proj: usize,
        psl_tolerance: u32,
        seed: u64,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            alice: AliceNet::random_scaled(n_bits, n_proj, scale, rng),
            bob: BobNet::random_scaled(n_bits, n_proj, scale, rng),
            eve: Some(EveNet::random_scaled(n_bits, n_proj, scale, rng)),
            n_bits,
            n_proj,
            seed,
            psl_tolerance,
            converged: false,
            training_epochs: 0,
        }
    }

    pub fn eve(&self) -> Result<&EveNet<f32>> {
        self.eve
            .as_ref()
            .ok_or_else(|| AncError::Usage("model bundle carries no adversary network".into()))
    }

    /// Copy without Eve, as shipped to a receiver.
    pub fn deployment(&self) -> Self {
        Self {
            eve: None,
            ..self.clone()
        }
    }

    pub fn summary(&self) -> String {
        let eve = match &self.eve {
            Some(e) => format!("{} parameters", e.param_count()),
            None => "not included".to_string(),
        };
        format!(
            "bits: {}\nprojection width: {}\nseed: {}\nkey psl tolerance: {}\nconverged: {}\ntraining epochs: {}\nalice: {} parameters\nbob: {} parameters\neve: {}\n",
            self.n_bits,
            self.n_proj,
            self.seed,
            self.psl_tolerance,
            self.converged,
            self.training_epochs,
            self.alice.param_count(),
            self.bob.param_count(),
            eve,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitVector;
    use crate::layers::bits_to_signal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n_proj: usize) -> AncModel {
        let mut rng = ChaCha8Rng::seed_from_u64(n_proj as u64);
        AncModel::random(8, n_proj, 5, 0, &mut rng)
    }

    #[test]
    fn output_shapes() {
        for n_proj in [4, 8, 16, 32] {
            let m = model(n_proj);
            let x = bits_to_signal::<f32>(&BitVector::from_value(0x3C, 8));
            let k = bits_to_signal::<f32>(&BitVector::from_value(0x0F, 8));
            let a = m.alice.forward(&x, &k).unwrap();
            assert_eq!((a.x_hat.len(), a.y.len(), a.k_hat.len()), (8, 8, 8));
            assert!(a.y.iter().all(|v| v.abs() <= 1.0));
            let b = m.bob.forward(&a.y, &k).unwrap();
            assert_eq!((b.x_hat.len(), b.k_hat.len()), (8, 8));
            assert_eq!(m.eve().unwrap().forward(&a.y).unwrap().len(), 8);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = model(8);
        let x = bits_to_signal::<f32>(&BitVector::from_value(0x81, 8));
        let k = bits_to_signal::<f32>(&BitVector::from_value(0x1B, 8));
        assert_eq!(m.alice.forward(&x, &k).unwrap(), m.alice.forward(&x, &k).unwrap());
        assert_eq!(m.bob.forward(&x, &k).unwrap(), m.bob.forward(&x, &k).unwrap());
        let e = m.eve().unwrap();
        assert_eq!(e.forward(&x).unwrap(), e.forward(&x).unwrap());
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let m = model(4);
        assert!(matches!(m.alice.forward(&[1.0; 7], &[1.0; 8]), Err(AncError::Shape { .. })));
        assert!(matches!(m.bob.forward(&[1.0; 8], &[1.0; 9]), Err(AncError::Shape { .. })));
        assert!(m.eve().unwrap().forward(&[1.0; 3]).is_err());
    }

    #[test]
    fn encrypt_batch_matches_full_forward() {
        let m = model(8);
        let x = Tensor::from_fn(3, 8, |r, c| if (r + c) % 3 == 0 { 1.0 } else { -1.0 });
        let k = Tensor::from_fn(3, 8, |_, c| if c < 4 { 1.0 } else { -1.0 });
        assert_eq!(m.alice.encrypt_batch(&x, &k).unwrap(), m.alice.forward_batch(&x, &k).unwrap().y);
        let bx = m.bob.forward_batch(&x, &k).unwrap().x_hat;
        assert_eq!(m.bob.decrypt_batch(&x, &k).unwrap(), bx);
    }

    #[test]
    fn parameter_counts_follow_formula() {
        for n_proj in [4, 8, 16, 32] {
            let m = model(n_proj);
            assert_eq!(m.alice.param_count(), alice_param_count(8, n_proj));
            assert_eq!(m.bob.param_count(), bob_param_count(8, n_proj));
            assert_eq!(m.eve().unwrap().param_count(), eve_param_count(8, n_proj));
            assert!(m.eve().unwrap().param_count() < m.bob.param_count());
        }
        // growth is linear in the projection width
        let d1 = alice_param_count(8, 8) - alice_param_count(8, 4);
        let d2 = alice_param_count(8, 16) - alice_param_count(8, 8);
        assert_eq!(2 * d1, d2);
    }
}
