use crate::{sigmoid, AutodiffError, Gradients, ParamId, ParamStore, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Probabilities are clamped to this band before taking logs.
const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    /// Σ weights[i] · table[rows[i]]
    Gather {
        param: ParamId,
        rows: Vec<usize>,
        weights: Vec<f64>,
    },
    Concat(Vec<Var>),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ConcatBroadcast {
        m: Var,
        v: Var,
    },
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddScalar(Var, Var),
    MulScalar(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    MaskMul {
        x: Var,
        mask: Vec<f64>,
    },
    Pool {
        weights: Vec<f64>,
        m: Var,
    },
    Outer {
        weights: Vec<f64>,
        v: Var,
    },
    Norm(Var),
    Cosine(Var, Var),
    Stack(Vec<Var>),
    Softmax(Var),
    WeightedSum {
        w: Var,
        xs: Vec<Var>,
    },
    Bce {
        y: Var,
        label: f64,
    },
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    /// Empty for parameter leaves; their values are read from the store.
    value: Vec<f64>,
}

/// Records operations in topological order for one reverse pass.
///
/// Every value is a `rows × cols` matrix; vectors are `1 × n` and scalars
/// `1 × 1`. The tape borrows its [`ParamStore`] immutably.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

fn shape_of(rows: usize, cols: usize) -> Vec<usize> {
    vec![rows, cols]
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.tensor(id).data(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Value of a `1 × 1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_vector(&self, op: &'static str, v: Var) -> Result<usize> {
        let (r, c) = self.shape(v);
        if r != 1 {
            return Err(AutodiffError::Shape {
                op,
                left: vec![1, c],
                right: shape_of(r, c),
            });
        }
        Ok(c)
    }

    fn check_scalar(&self, op: &'static str, v: Var) -> Result<()> {
        let (r, c) = self.shape(v);
        if r * c != 1 {
            return Err(AutodiffError::NotScalar {
                op,
                shape: shape_of(r, c),
            });
        }
        Ok(())
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(AutodiffError::Shape {
                op,
                left: shape_of(sa.0, sa.1),
                right: shape_of(sb.0, sb.1),
            });
        }
        Ok(sa)
    }

    // ── leaves ──────────────────────────────────────────────────────

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(AutodiffError::Shape {
                op: "constant",
                left: shape_of(rows, cols),
                right: vec![data.len()],
            });
        }
        Ok(self.push(Op::Constant, rows, cols, data))
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(Op::Constant, 1, n, data)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.push(Op::Constant, 1, 1, vec![x])
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(Op::Constant, rows, cols, vec![0.0; rows * cols])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let (rows, cols) = self.store.tensor(id).rows_cols();
        self.push(Op::Param(id), rows, cols, Vec::new())
    }

    /// Row `row` of an embedding table.
    pub fn gather(&mut self, id: ParamId, row: usize) -> Result<Var> {
        self.gather_weighted(id, &[row], &[1.0])
    }

    /// Weighted combination of table rows; an empty row list yields zeros.
    pub fn gather_weighted(&mut self, id: ParamId, rows: &[usize], weights: &[f64]) -> Result<Var> {
        let table = self.store.tensor(id);
        let (n, cols) = table.rows_cols();
        if rows.len() != weights.len() {
            return Err(AutodiffError::Shape {
                op: "gather",
                left: vec![rows.len()],
                right: vec![weights.len()],
            });
        }
        let data = table.data();
        let mut out = vec![0.0; cols];
        for (&r, &w) in rows.iter().zip(weights) {
            if r >= n {
                return Err(AutodiffError::Index {
                    op: "gather",
                    index: r,
                    len: n,
                });
            }
            for (o, x) in out.iter_mut().zip(&data[r * cols..(r + 1) * cols]) {
                *o += w * x;
            }
        }
        Ok(self.push(
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
                weights: weights.to_vec(),
            },
            1,
            cols,
            out,
        ))
    }

    // ── structural ──────────────────────────────────────────────────

    /// Concatenates row vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::Empty { op: "concat" });
        }
        let mut out = Vec::new();
        for &p in parts {
            self.check_vector("concat", p)?;
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        Ok(self.push(Op::Concat(parts.to_vec()), 1, n, out))
    }

    /// Appends the row vector `v` to every row of `m`.
    pub fn concat_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let vc = self.check_vector("concat_broadcast", v)?;
        let (rows, mc) = self.shape(m);
        let cols = mc + vc;
        let mut out = Vec::with_capacity(rows * cols);
        let (mv, vv) = (self.value(m), self.value(v));
        for r in 0..rows {
            out.extend_from_slice(&mv[r * mc..(r + 1) * mc]);
            out.extend_from_slice(vv);
        }
        Ok(self.push(Op::ConcatBroadcast { m, v }, rows, cols, out))
    }

    /// Stacks scalars into a row vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(AutodiffError::Empty { op: "stack" });
        }
        let mut out = Vec::with_capacity(scalars.len());
        for &s in scalars {
            self.check_scalar("stack", s)?;
            out.push(self.scalar_value(s));
        }
        let n = out.len();
        Ok(self.push(Op::Stack(scalars.to_vec()), 1, n, out))
    }

    // ── dense algebra ───────────────────────────────────────────────

    /// `x W + b` applied to every row of `x` (`r × m` · `m × n` + `1 × n`).
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xr, xc) = self.shape(x);
        let (wr, wc) = self.shape(w);
        if xc != wr {
            return Err(AutodiffError::Shape {
                op: "linear",
                left: shape_of(xr, xc),
                right: shape_of(wr, wc),
            });
        }
        if let Some(b) = b {
            let (br, bc) = self.shape(b);
            if br * bc != wc {
                return Err(AutodiffError::Shape {
                    op: "linear bias",
                    left: shape_of(wr, wc),
                    right: shape_of(br, bc),
                });
            }
        }
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = vec![0.0; xr * wc];
        for r in 0..xr {
            let row = &mut out[r * wc..(r + 1) * wc];
            if let Some(b) = b {
                row.copy_from_slice(self.value(b));
            }
            for (i, &xi) in xv[r * xc..(r + 1) * xc].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (o, wij) in row.iter_mut().zip(&wv[i * wc..(i + 1) * wc]) {
                    *o += xi * wij;
                }
            }
        }
        Ok(self.push(Op::Linear { x, w, b }, xr, wc, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.check_same("add", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add(a, b), r, c, out))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.check_same("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul(a, b), r, c, out))
    }

    /// Adds a `1 × 1` node to every entry of `x`.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check_scalar("add_scalar", s)?;
        let sv = self.scalar_value(s);
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v + sv).collect();
        Ok(self.push(Op::AddScalar(x, s), r, c, out))
    }

    /// Multiplies every entry of `x` by a `1 × 1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check_scalar("mul_scalar", s)?;
        let sv = self.scalar_value(s);
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v * sv).collect();
        Ok(self.push(Op::MulScalar(x, s), r, c, out))
    }

    /// `scale · x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(Op::Affine { x, scale }, r, c, out)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if mask.len() != r * c {
            return Err(AutodiffError::Shape {
                op: "mask_mul",
                left: shape_of(r, c),
                right: vec![mask.len()],
            });
        }
        let out = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        Ok(self.push(Op::MaskMul { x, mask }, r, c, out))
    }

    /// `weightsᵀ m`: a constant-weighted sum of the rows of `m`.
    pub fn pool(&mut self, weights: &[f64], m: Var) -> Result<Var> {
        let (r, c) = self.shape(m);
        if weights.len() != r {
            return Err(AutodiffError::Shape {
                op: "pool",
                left: vec![weights.len()],
                right: shape_of(r, c),
            });
        }
        let mv = self.value(m);
        let mut out = vec![0.0; c];
        for (k, &w) in weights.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(&mv[k * c..(k + 1) * c]) {
                *o += w * x;
            }
        }
        Ok(self.push(
            Op::Pool {
                weights: weights.to_vec(),
                m,
            },
            1,
            c,
            out,
        ))
    }

    /// Outer product of a constant column `weights` with row vector `v`.
    pub fn outer(&mut self, weights: &[f64], v: Var) -> Result<Var> {
        let c = self.check_vector("outer", v)?;
        let vv = self.value(v);
        let mut out = Vec::with_capacity(weights.len() * c);
        for &w in weights {
            out.extend(vv.iter().map(|x| w * x));
        }
        Ok(self.push(
            Op::Outer {
                weights: weights.to_vec(),
                v,
            },
            weights.len(),
            c,
            out,
        ))
    }

    /// Weighted sum `Σ_i w_i · xs_i` of equally shaped nodes, `w` a row vector.
    pub fn weighted_sum(&mut self, w: Var, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(AutodiffError::Empty { op: "weighted_sum" });
        }
        let n = self.check_vector("weighted_sum", w)?;
        if n != xs.len() {
            return Err(AutodiffError::Shape {
                op: "weighted_sum",
                left: vec![n],
                right: vec![xs.len()],
            });
        }
        let (r, c) = self.shape(xs[0]);
        for &x in &xs[1..] {
            self.check_same("weighted_sum", xs[0], x)?;
        }
        let wv = self.value(w).to_vec();
        let mut out = vec![0.0; r * c];
        for (&x, wi) in xs.iter().zip(&wv) {
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o += wi * v;
            }
        }
        Ok(self.push(
            Op::WeightedSum {
                w,
                xs: xs.to_vec(),
            },
            r,
            c,
            out,
        ))
    }

    // ── nonlinearities ──────────────────────────────────────────────

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(Op::Sigmoid(x), r, c, out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh(x), r, c, out)
    }

    /// Softmax of a row vector, computed after subtracting the maximum.
    pub fn softmax(&mut self, v: Var) -> Result<Var> {
        let n = self.check_vector("softmax", v)?;
        if n == 0 {
            return Err(AutodiffError::Empty { op: "softmax" });
        }
        let out = softmax(self.value(v));
        Ok(self.push(Op::Softmax(v), 1, n, out))
    }

    // ── reductions ──────────────────────────────────────────────────

    /// Euclidean norm of all entries.
    pub fn norm(&mut self, x: Var) -> Var {
        let n = self.value(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push(Op::Norm(x), 1, 1, vec![n])
    }

    /// Cosine similarity; 0 when either side has zero norm.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("cosine", a, b)?;
        let c = cosine(self.value(a), self.value(b));
        Ok(self.push(Op::Cosine(a, b), 1, 1, vec![c]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x), 1, 1, vec![s])
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|v| v * v).sum();
        self.push(Op::SumSquares(x), 1, 1, vec![s])
    }

    /// Sum of several scalars.
    pub fn add_all(&mut self, scalars: &[Var]) -> Result<Var> {
        let stacked = self.stack(scalars)?;
        Ok(self.sum(stacked))
    }

    /// Binary cross-entropy of a probability against a 0/1 label, with the
    /// probability clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, y: Var, label: f64) -> Result<Var> {
        self.check_scalar("bce", y)?;
        let p = self.scalar_value(y).clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
        Ok(self.push(Op::Bce { y, label }, 1, 1, vec![loss]))
    }

    // ── reverse pass ────────────────────────────────────────────────

    /// Propagates `seed · ∂loss/∂θ` into `grads` for every parameter reached.
    pub fn backward(&self, loss: Var, seed: f64, grads: &mut Gradients) -> Result<()> {
        self.check_scalar("backward", loss)?;
        let mut node_grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        node_grads[loss.0] = vec![seed];

        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut node_grads[i]);
            if g.is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            let mut acc = Accumulator {
                nodes: &self.nodes,
                node_grads: &mut node_grads,
                grads: &mut *grads,
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => add_into(acc.grads.get_mut(*id), &g),
                Op::Gather {
                    param,
                    rows,
                    weights,
                } => {
                    let buf = acc.grads.get_mut(*param);
                    let cols = node.cols;
                    for (&r, &w) in rows.iter().zip(weights) {
                        for (d, gv) in buf[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                            *d += w * gv;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].cols;
                        if let Some(t) = acc.target(p) {
                            add_into(t, &g[off..off + n]);
                        }
                        off += n;
                    }
                }
                Op::ConcatBroadcast { m, v } => {
                    let mc = self.nodes[m.0].cols;
                    let cols = node.cols;
                    if let Some(t) = acc.target(*m) {
                        for r in 0..node.rows {
                            add_into(&mut t[r * mc..(r + 1) * mc], &g[r * cols..r * cols + mc]);
                        }
                    }
                    if let Some(t) = acc.target(*v) {
                        for r in 0..node.rows {
                            add_into(t, &g[r * cols + mc..(r + 1) * cols]);
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xr, xc) = (self.nodes[x.0].rows, self.nodes[x.0].cols);
                    let wc = node.cols;
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if let Some(t) = acc.target(*x) {
                        for r in 0..xr {
                            let gr = &g[r * wc..(r + 1) * wc];
                            for i in 0..xc {
                                let wi = &wv[i * wc..(i + 1) * wc];
                                t[r * xc + i] += dot(gr, wi);
                            }
                        }
                    }
                    if let Some(t) = acc.target(*w) {
                        for r in 0..xr {
                            let gr = &g[r * wc..(r + 1) * wc];
                            for (i, &xi) in xv[r * xc..(r + 1) * xc].iter().enumerate() {
                                if xi == 0.0 {
                                    continue;
                                }
                                for (d, gv) in t[i * wc..(i + 1) * wc].iter_mut().zip(gr) {
                                    *d += xi * gv;
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        if let Some(t) = acc.target(*b) {
                            for r in 0..xr {
                                add_into(t, &g[r * wc..(r + 1) * wc]);
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    if let Some(t) = acc.target(*x) {
                        for ((d, gv), y) in t.iter_mut().zip(&g).zip(&node.value) {
                            *d += gv * y * (1.0 - y);
                        }
                    }
                }
                Op::Tanh(x) => {
                    if let Some(t) = acc.target(*x) {
                        for ((d, gv), y) in t.iter_mut().zip(&g).zip(&node.value) {
                            *d += gv * (1.0 - y * y);
                        }
                    }
                }
                Op::Add(a, b) => {
                    if let Some(t) = acc.target(*a) {
                        add_into(t, &g);
                    }
                    if let Some(t) = acc.target(*b) {
                        add_into(t, &g);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if let Some(t) = acc.target(*a) {
                        for ((d, gv), y) in t.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    if let Some(t) = acc.target(*b) {
                        for ((d, gv), x) in t.iter_mut().zip(&g).zip(av) {
                            *d += gv * x;
                        }
                    }
                }
                Op::AddScalar(x, s) => {
                    if let Some(t) = acc.target(*x) {
                        add_into(t, &g);
                    }
                    if let Some(t) = acc.target(*s) {
                        t[0] += g.iter().sum::<f64>();
                    }
                }
                Op::MulScalar(x, s) => {
                    let sv = self.scalar_value(*s);
                    let xv = self.value(*x);
                    if let Some(t) = acc.target(*x) {
                        for (d, gv) in t.iter_mut().zip(&g) {
                            *d += gv * sv;
                        }
                    }
                    if let Some(t) = acc.target(*s) {
                        t[0] += dot(&g, xv);
                    }
                }
                Op::Affine { x, scale } => {
                    if let Some(t) = acc.target(*x) {
                        for (d, gv) in t.iter_mut().zip(&g) {
                            *d += scale * gv;
                        }
                    }
                }
                Op::MaskMul { x, mask } => {
                    if let Some(t) = acc.target(*x) {
                        for ((d, gv), m) in t.iter_mut().zip(&g).zip(mask) {
                            *d += gv * m;
                        }
                    }
                }
                Op::Pool { weights, m } => {
                    let c = node.cols;
                    if let Some(t) = acc.target(*m) {
                        for (k, &w) in weights.iter().enumerate() {
                            for (d, gv) in t[k * c..(k + 1) * c].iter_mut().zip(&g) {
                                *d += w * gv;
                            }
                        }
                    }
                }
                Op::Outer { weights, v } => {
                    let c = node.cols;
                    if let Some(t) = acc.target(*v) {
                        for (k, &w) in weights.iter().enumerate() {
                            for (d, gv) in t.iter_mut().zip(&g[k * c..(k + 1) * c]) {
                                *d += w * gv;
                            }
                        }
                    }
                }
                Op::Norm(x) => {
                    let n = node.value[0];
                    if n > 0.0 {
                        let xv = self.value(*x);
                        if let Some(t) = acc.target(*x) {
                            for (d, xi) in t.iter_mut().zip(xv) {
                                *d += g[0] * xi / n;
                            }
                        }
                    }
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let na = dot(av, av).sqrt();
                    let nb = dot(bv, bv).sqrt();
                    if na > 0.0 && nb > 0.0 {
                        let c = node.value[0];
                        if let Some(t) = acc.target(*a) {
                            for ((d, ai), bi) in t.iter_mut().zip(av).zip(bv) {
                                *d += g[0] * (bi / (na * nb) - c * ai / (na * na));
                            }
                        }
                        if let Some(t) = acc.target(*b) {
                            for ((d, ai), bi) in t.iter_mut().zip(av).zip(bv) {
                                *d += g[0] * (ai / (na * nb) - c * bi / (nb * nb));
                            }
                        }
                    }
                }
                Op::Stack(parts) => {
                    for (&p, gv) in parts.iter().zip(&g) {
                        if let Some(t) = acc.target(p) {
                            t[0] += gv;
                        }
                    }
                }
                Op::Softmax(v) => {
                    let y = &node.value;
                    let inner = dot(&g, y);
                    if let Some(t) = acc.target(*v) {
                        for ((d, gv), yi) in t.iter_mut().zip(&g).zip(y) {
                            *d += yi * (gv - inner);
                        }
                    }
                }
                Op::WeightedSum { w, xs } => {
                    let wv = self.value(*w);
                    for (j, &x) in xs.iter().enumerate() {
                        let wj = wv[j];
                        if let Some(t) = acc.target(x) {
                            for (d, gv) in t.iter_mut().zip(&g) {
                                *d += wj * gv;
                            }
                        }
                    }
                    if let Some(t) = acc.target(*w) {
                        for (j, &x) in xs.iter().enumerate() {
                            t[j] += dot(&g, self.value(x));
                        }
                    }
                }
                Op::Bce { y, label } => {
                    let p = self.scalar_value(*y);
                    if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                        if let Some(t) = acc.target(*y) {
                            t[0] += g[0] * (-label / p + (1.0 - label) / (1.0 - p));
                        }
                    }
                }
                Op::Sum(x) => {
                    if let Some(t) = acc.target(*x) {
                        t.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::SumSquares(x) => {
                    let xv = self.value(*x);
                    if let Some(t) = acc.target(*x) {
                        for (d, xi) in t.iter_mut().zip(xv) {
                            *d += 2.0 * g[0] * xi;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Routes a gradient contribution to the right buffer: intermediate nodes,
/// parameter leaves, or nowhere for constants.
struct Accumulator<'a> {
    nodes: &'a [Node],
    node_grads: &'a mut Vec<Vec<f64>>,
    grads: &'a mut Gradients,
}

impl Accumulator<'_> {
    fn target(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Constant => None,
            Op::Param(id) => Some(self.grads.get_mut(id)),
            _ => {
                let buf = &mut self.node_grads[v.0];
                if buf.is_empty() {
                    *buf = vec![0.0; node.rows * node.cols];
                }
                Some(buf.as_mut_slice())
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-subtracted softmax.
pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
