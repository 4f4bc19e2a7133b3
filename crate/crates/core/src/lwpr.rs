//! Incremental locally weighted regression with probabilistic predictions.
//!
//! A model is a set of receptive fields. Each field owns a Gaussian kernel
//! (center `c` and metric `D`) and a local affine model fitted by
//! activation-weighted recursive least squares. Predictions blend the local
//! models with normalized kernel weights:
//!
//! ```text
//! w_j   = exp(-½ (x-c_j)ᵀ D_j (x-c_j)) / Σ_i exp(-½ (x-c_i)ᵀ D_i (x-c_i))
//! y(x)  = Σ_j w_j y_j(x)
//! σ²(x) = Σ_j w_j ((y(x) - y_j(x))² + σ_j²)
//! ```
//!
//! The variance has two parts: the spread of the local models around the
//! blended mean, and each field's own residual variance.

use crate::error::{Error, Result};

/// Magic header of the persistence format.
pub const MAGIC: &[u8; 5] = b"LWPR1";

#[derive(Debug, Clone, PartialEq)]
pub struct LwprConfig {
    /// A sample whose strongest unnormalized activation falls below this
    /// value spawns a new receptive field.
    pub w_gen: f64,
    /// Fields with activation below this value are skipped during updates.
    pub participation: f64,
    /// Exponential forgetting factor of the per-field regression, in (0, 1].
    pub forgetting: f64,
    /// Ridge regularizer; the inverse-precision matrix of a fresh field
    /// starts at `I / ridge`.
    pub ridge: f64,
    /// Row-major `d × d` metric given to new fields.
    pub init_metric: Vec<f64>,
}

impl LwprConfig {
    /// Diagonal initial metric with `1 / width²` per input dimension.
    pub fn with_widths(widths: &[f64]) -> Self {
        let d = widths.len();
        let mut metric = vec![0.0; d * d];
        for (i, w) in widths.iter().enumerate() {
            metric[i * d + i] = 1.0 / (w * w);
        }
        Self { w_gen: 0.1, participation: 0.001, forgetting: 1.0, ridge: 1e-6, init_metric: metric }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if !(self.w_gen > 0.0 && self.w_gen < 1.0) {
            return Err(Error::InvalidHyperparameter(format!("w_gen = {}", self.w_gen)));
        }
        if !(self.participation >= 0.0 && self.participation < 1.0) {
            return Err(Error::InvalidHyperparameter(format!("participation = {}", self.participation)));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::InvalidHyperparameter(format!("forgetting = {}", self.forgetting)));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!("ridge = {}", self.ridge)));
        }
        if self.init_metric.len() != input_dim * input_dim {
            return Err(Error::DimensionMismatch { expected: input_dim * input_dim, actual: self.init_metric.len() });
        }
        if !is_positive_definite(&self.init_metric, input_dim) {
            return Err(Error::InvalidHyperparameter("init_metric is not symmetric positive-definite".into()));
        }
        Ok(())
    }
}

/// One local linear model with its Gaussian activation kernel.
///
/// The affine model is expressed relative to the center:
/// `y_j(x) = b_0 + Σ_i b_{i+1} (x_i - c_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveField {
    pub center: Vec<f64>,
    /// Row-major `d × d`, symmetric positive-definite.
    metric: Vec<f64>,
    diagonal: bool,
    /// Offset followed by one slope per input dimension.
    pub coefficients: Vec<f64>,
    pub local_variance: f64,
    pub weighted_count: f64,
    /// Row-major `(d+1) × (d+1)` inverse of the regularized weighted
    /// Gram matrix; the recursive least-squares state.
    pub inv_gram: Vec<f64>,
}

impl ReceptiveField {
    /// Builds a field directly from its parameters, with an empty regression
    /// state. Used for hand-built models and tests.
    pub fn new(center: Vec<f64>, metric: Vec<f64>, coefficients: Vec<f64>, local_variance: f64) -> Result<Self> {
        let d = center.len();
        if metric.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, actual: metric.len() });
        }
        if coefficients.len() != d + 1 {
            return Err(Error::DimensionMismatch { expected: d + 1, actual: coefficients.len() });
        }
        if !is_positive_definite(&metric, d) {
            return Err(Error::InvalidHyperparameter("metric is not symmetric positive-definite".into()));
        }
        if !(local_variance >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!("local_variance = {local_variance}")));
        }
        Ok(Self {
            center,
            diagonal: is_diagonal(&metric, d),
            metric,
            coefficients,
            local_variance,
            weighted_count: 0.0,
            inv_gram: identity(d + 1, 1.0),
        })
    }

    fn spawn(x: &[f64], config: &LwprConfig) -> Self {
        let d = x.len();
        Self {
            center: x.to_vec(),
            metric: config.init_metric.clone(),
            diagonal: is_diagonal(&config.init_metric, d),
            coefficients: vec![0.0; d + 1],
            local_variance: 0.0,
            weighted_count: 0.0,
            inv_gram: identity(d + 1, 1.0 / config.ridge),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    /// `-½ (x-c)ᵀ D (x-c)`, the log of the unnormalized activation.
    #[inline]
    pub fn log_kernel(&self, x: &[f64]) -> f64 {
        let d = self.center.len();
        let mut q = 0.0;
        if self.diagonal {
            for (i, (xi, ci)) in x.iter().zip(&self.center).enumerate() {
                let dr = xi - ci;
                q += self.metric[i * d + i] * dr * dr;
            }
            return -0.5 * q;
        }
        for r in 0..d {
            let dr = x[r] - self.center[r];
            let row = &self.metric[r * d..(r + 1) * d];
            let mut acc = 0.0;
            for c in 0..d {
                acc += row[c] * (x[c] - self.center[c]);
            }
            q += dr * acc;
        }
        -0.5 * q
    }

    /// Local affine prediction `y_j(x)`.
    #[inline]
    pub fn local_prediction(&self, x: &[f64]) -> f64 {
        let mut y = self.coefficients[0];
        for (i, (xi, ci)) in x.iter().zip(&self.center).enumerate() {
            y += self.coefficients[i + 1] * (xi - ci);
        }
        y
    }

    /// Weighted recursive least-squares step with forgetting.
    fn absorb(&mut self, x: &[f64], y: f64, weight: f64, forgetting: f64) {
        let n = self.coefficients.len();
        let mut z = Vec::with_capacity(n);
        z.push(1.0);
        z.extend(x.iter().zip(&self.center).map(|(xi, ci)| xi - ci));

        let residual = y - self.local_prediction(x);

        let mut pz = vec![0.0; n];
        for r in 0..n {
            pz[r] = (0..n).map(|c| self.inv_gram[r * n + c] * z[c]).sum();
        }
        let zpz: f64 = z.iter().zip(&pz).map(|(a, b)| a * b).sum();
        let denom = forgetting / weight + zpz;

        for r in 0..n {
            self.coefficients[r] += pz[r] * residual / denom;
        }
        for r in 0..n {
            for c in 0..n {
                self.inv_gram[r * n + c] = (self.inv_gram[r * n + c] - pz[r] * pz[c] / denom) / forgetting;
            }
        }
        // keep the inverse Gram matrix exactly symmetric
        for r in 0..n {
            for c in (r + 1)..n {
                let avg = 0.5 * (self.inv_gram[r * n + c] + self.inv_gram[c * n + r]);
                self.inv_gram[r * n + c] = avg;
                self.inv_gram[c * n + r] = avg;
            }
        }

        // the first sample has no prior prediction to score
        let prior = forgetting * self.weighted_count;
        let total = prior + weight;
        if prior > 0.0 {
            self.local_variance = (prior * self.local_variance + weight * residual * residual) / total;
        }
        self.weighted_count = total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// Largest unnormalized kernel value over all fields.
    pub max_activation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LwprModel {
    input_dim: usize,
    fields: Vec<ReceptiveField>,
    config: LwprConfig,
}

impl LwprModel {
    pub fn new(input_dim: usize, config: LwprConfig) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidHyperparameter("input_dim must be positive".into()));
        }
        config.validate(input_dim)?;
        Ok(Self { input_dim, fields: Vec::new(), config })
    }

    /// Assembles a model from explicit fields.
    pub fn from_fields(input_dim: usize, config: LwprConfig, fields: Vec<ReceptiveField>) -> Result<Self> {
        let mut model = Self::new(input_dim, config)?;
        for f in &fields {
            if f.input_dim() != input_dim {
                return Err(Error::DimensionMismatch { expected: input_dim, actual: f.input_dim() });
            }
        }
        model.fields = fields;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn fields(&self) -> &[ReceptiveField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn config(&self) -> &LwprConfig {
        &self.config
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("query"));
        }
        Ok(())
    }

    /// Normalized kernel weights, one per field in field order.
    ///
    /// Computed in log space relative to the largest kernel so distant
    /// queries still produce a proper distribution instead of `0/0`.
    pub fn activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if self.fields.is_empty() {
            return Err(Error::NoReceptiveFields);
        }
        let mut weights: Vec<f64> = self.fields.iter().map(|f| f.log_kernel(x)).collect();
        normalize_log_weights(&mut weights);
        Ok(weights)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let [p] = predict_shared([self], x)?;
        Ok(p)
    }

    /// True when both models have the same receptive-field centers and
    /// metrics, so their kernels coincide at every input.
    pub fn same_layout(&self, other: &LwprModel) -> bool {
        self.input_dim == other.input_dim
            && self.fields.len() == other.fields.len()
            && self.fields.iter().zip(&other.fields).all(|(a, b)| a.center == b.center && a.metric == b.metric)
    }

    /// Incorporates one training sample.
    ///
    /// When no field is activated above `w_gen` a new field centered at `x`
    /// is created and fitted to the sample; otherwise every field above the
    /// participation threshold receives an activation-weighted update.
    /// Invalid samples leave the model untouched.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_input(x)?;
        if !y.is_finite() {
            return Err(Error::NonFiniteInput("target"));
        }
        let activations: Vec<f64> = self.fields.iter().map(|f| f.log_kernel(x).exp()).collect();
        let max_activation = activations.iter().copied().fold(0.0, f64::max);

        if max_activation < self.config.w_gen {
            let mut field = ReceptiveField::spawn(x, &self.config);
            field.absorb(x, y, 1.0, self.config.forgetting);
            self.fields.push(field);
        } else {
            for (field, &a) in self.fields.iter_mut().zip(&activations) {
                if a > self.config.participation {
                    field.absorb(x, y, a, self.config.forgetting);
                }
            }
        }
        Ok(())
    }

    /// Serializes the model into the `LWPR1` binary container.
    ///
    /// Layout (little endian): magic, `u32` input dim, five `f64`
    /// hyperparameter scalars and the initial metric, `u32` field count,
    /// then per field its center, metric, coefficients, local variance,
    /// weighted count and regression state.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.input_dim;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for v in [self.config.w_gen, self.config.participation, self.config.forgetting, self.config.ridge] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f64s(&mut out, &self.config.init_metric);
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for f in &self.fields {
            put_f64s(&mut out, &f.center);
            put_f64s(&mut out, &f.metric);
            put_f64s(&mut out, &f.coefficients);
            out.extend_from_slice(&f.local_variance.to_le_bytes());
            out.extend_from_slice(&f.weighted_count.to_le_bytes());
            put_f64s(&mut out, &f.inv_gram);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, reason: "bad magic header".into() });
        }
        let d = r.u32()? as usize;
        if d == 0 || d > 1024 {
            return Err(r.error(format!("implausible input dimension {d}")));
        }
        let w_gen = r.f64()?;
        let participation = r.f64()?;
        let forgetting = r.f64()?;
        let ridge = r.f64()?;
        let init_metric = r.f64s(d * d)?;
        let config = LwprConfig { w_gen, participation, forgetting, ridge, init_metric };
        let at = r.pos;
        config.validate(d).map_err(|e| Error::Format { offset: at, reason: e.to_string() })?;

        let count = r.u32()? as usize;
        let mut fields = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let center = r.f64s(d)?;
            let metric = r.f64s(d * d)?;
            let coefficients = r.f64s(d + 1)?;
            let local_variance = r.f64()?;
            let weighted_count = r.f64()?;
            let inv_gram = r.f64s((d + 1) * (d + 1))?;
            fields.push(ReceptiveField {
                center,
                diagonal: is_diagonal(&metric, d),
                metric,
                coefficients,
                local_variance,
                weighted_count,
                inv_gram,
            });
        }
        if r.pos != bytes.len() {
            return Err(r.error(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { input_dim: d, fields, config })
    }
}

/// Turns log-kernels into normalized weights in place; returns the largest
/// log-kernel.
/// Predicts `N` models that share one receptive-field layout (see
/// [`LwprModel::same_layout`]) at the same input, evaluating every kernel
/// once. Kernels are taken from the first model.
pub fn predict_shared<const N: usize>(models: [&LwprModel; N], x: &[f64]) -> Result<[Prediction; N]> {
    let lead = models[0];
    lead.check_input(x)?;
    for m in &models {
        if m.fields.is_empty() {
            return Err(Error::NoReceptiveFields);
        }
    }
    debug_assert!(models.iter().all(|m| m.fields.len() == lead.fields.len()));

    const STACK: usize = 128;
    let mut stack = [0.0f64; STACK];
    let mut heap = Vec::new();
    let weights: &mut [f64] = if lead.fields.len() <= STACK {
        &mut stack[..lead.fields.len()]
    } else {
        heap.resize(lead.fields.len(), 0.0);
        &mut heap
    };
    for (w, f) in weights.iter_mut().zip(&lead.fields) {
        *w = f.log_kernel(x);
    }
    let max_log = normalize_log_weights(weights);

    Ok(models.map(|m| {
        let mean: f64 = weights.iter().zip(&m.fields).map(|(w, f)| w * f.local_prediction(x)).sum();
        let variance: f64 = weights
            .iter()
            .zip(&m.fields)
            .map(|(w, f)| {
                let y = f.local_prediction(x);
                w * ((mean - y) * (mean - y) + f.local_variance)
            })
            .sum();
        Prediction { mean, variance, max_activation: max_log.exp() }
    }))
}

fn normalize_log_weights(logs: &mut [f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logs.iter_mut() {
        *l /= sum;
    }
    max
}

fn is_diagonal(m: &[f64], d: usize) -> bool {
    (0..d).all(|r| (0..d).all(|c| r == c || m[r * d + c] == 0.0))
}

fn identity(n: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = scale;
    }
    m
}

/// Symmetry plus a Cholesky attempt.
fn is_positive_definite(m: &[f64], d: usize) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    for r in 0..d {
        for c in 0..r {
            let (a, b) = (m[r * d + c], m[c * d + r]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return false;
            }
        }
    }
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut diag = m[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= 0.0 {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = m[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    true
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, reason: String) -> Error {
        Error::Format { offset: self.pos, reason }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(
                self.error(format!("unexpected end of stream (need {n} bytes, have {})", self.bytes.len() - self.pos))
            );
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let s = self.take(4)?;
        Ok(u32::from_le_bytes(s.try_into().expect("length checked")))
    }

    fn f64(&mut self) -> Result<f64> {
        let s = self.take(8)?;
        Ok(f64::from_le_bytes(s.try_into().expect("length checked")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
