//! Structural-temporal backbone: a two-layer GCN per snapshot followed by a
//! GRU over time.
//!
//! Nodes carry no features, so the first layer reads a learned embedding
//! table (the one-hot identity projected to width `h`). A clip mask scales the
//! GCN output of each snapshot before it enters the GRU, so a masked-out
//! snapshot feeds a zero structural signal.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Csr, DynamicGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub node_count: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

/// Learnable tensors of one backbone instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    shape: EncoderShape,
    tensors: Vec<Tensor>,
}

const NAMES: [&str; 16] = [
    "embed", "gcn1_w", "gcn1_b", "gcn2_w", "gcn2_b", "gru_wz", "gru_uz", "gru_bz", "gru_wr",
    "gru_ur", "gru_br", "gru_wn", "gru_un", "gru_bn", "out_w", "out_b",
];

fn expected_shapes(s: EncoderShape) -> [(usize, usize); 16] {
    let (n, h, o) = (s.node_count, s.hidden, s.out_dim);
    [
        (n, h),
        (h, h),
        (1, h),
        (h, h),
        (1, h),
        (h, h),
        (h, h),
        (1, h),
        (h, h),
        (h, h),
        (1, h),
        (h, h),
        (h, h),
        (1, h),
        (h, o),
        (1, o),
    ]
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(shape: EncoderShape, rng: &mut R) -> Self {
        let tensors = expected_shapes(shape)
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| {
                if i == 0 {
                    // Unit variance. A Glorot limit shrinks with the node count,
                    // and the per-node signal would then be swamped by the shared
                    // biases after the first few optimiser steps.
                    Tensor::uniform(r, c, 3f64.sqrt(), rng)
                } else if r == 1 {
                    Tensor::zeros(r, c)
                } else {
                    Tensor::glorot(r, c, rng)
                }
            })
            .collect();
        Self { shape, tensors }
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        NAMES.iter().copied().zip(&self.tensors)
    }

    pub fn from_named(shape: EncoderShape, tensors: Vec<Tensor>) -> Result<Self> {
        let want = expected_shapes(shape);
        if tensors.len() != want.len()
            || tensors
                .iter()
                .zip(want)
                .any(|(a, (r, c))| a.shape() != [r, c])
        {
            return Err(shape_err("encoder params", "tensor list does not match shape"));
        }
        Ok(Self { shape, tensors })
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum()
    }

    /// Register every tensor as a learnable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Encoder<'t> {
        Encoder::new(self.shape, self.tensors.iter().map(|t| tape.param(t)).collect())
    }

    /// Register every tensor as a constant.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Encoder<'t> {
        Encoder::new(
            self.shape,
            self.tensors.iter().map(|t| tape.constant(t.clone())).collect(),
        )
    }
}

/// An [`EncoderParams`] bound to a tape. Per-snapshot GCN outputs are cached so
/// several clips over the same snapshots share one structural pass.
pub struct Encoder<'t> {
    shape: EncoderShape,
    vars: Vec<Var<'t>>,
    spatial: std::cell::RefCell<Vec<Option<(Arc<Csr>, Var<'t>)>>>,
}

impl<'t> Encoder<'t> {
    fn new(shape: EncoderShape, vars: Vec<Var<'t>>) -> Self {
        Self {
            shape,
            vars,
            spatial: std::cell::RefCell::new(Vec::new()),
        }
    }

    /// Wrap variables already on a tape, in parameter-name order.
    pub fn from_vars(shape: EncoderShape, vars: Vec<Var<'t>>) -> Result<Self> {
        let shapes = expected_shapes(shape);
        if vars.len() != shapes.len()
            || vars
                .iter()
                .zip(shapes)
                .any(|(v, (r, c))| v.value().shape() != [r, c])
        {
            return Err(shape_err("encoder", "variables do not match the encoder shape"));
        }
        Ok(Self::new(shape, vars))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    fn tape(&self) -> &'t Tape {
        self.vars[0].tape()
    }

    /// Two GCN layers on snapshot `t`.
    fn spatial(&self, adj: &[Arc<Csr>], t: usize) -> Result<Var<'t>> {
        let a = &adj[t];
        if let Some(Some((key, v))) = self.spatial.borrow().get(t) {
            if Arc::ptr_eq(key, a) {
                return Ok(*v);
            }
        }
        let v = &self.vars;
        let x = v[0].spmm(a)?.matmul(v[1])?.add_row(v[2])?.relu();
        let x = x.spmm(a)?.matmul(v[3])?.add_row(v[4])?;
        let mut cache = self.spatial.borrow_mut();
        if cache.len() <= t {
            cache.resize(t + 1, None);
        }
        cache[t] = Some((Arc::clone(a), x));
        Ok(x)
    }

    fn initial_state(&self) -> Result<Var<'t>> {
        Ok(self
            .tape()
            .constant(Tensor::zeros(self.shape.node_count, self.shape.hidden)))
    }

    fn gru(&self, x: Var<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let v = &self.vars;
        let gate = |w: usize, u: usize, b: usize, hh: Var<'t>| -> Result<Var<'t>> {
            x.matmul(v[w])?.add(hh.matmul(v[u])?)?.add_row(v[b])
        };
        let z = gate(5, 6, 7, h)?.sigmoid();
        let r = gate(8, 9, 10, h)?.sigmoid();
        let n = gate(11, 12, 13, r.mul(h)?)?.tanh();
        // h' = (1 − z)·n + z·h
        n.add(z.mul(h.sub(n)?)?)
    }

    fn readout(&self, h: Var<'t>) -> Result<Var<'t>> {
        h.matmul(self.vars[14])?.add_row(self.vars[15])
    }

    fn check(&self, adj: &[Arc<Csr>]) -> Result<()> {
        if let Some(a) = adj.iter().find(|a| a.n_rows() != self.shape.node_count) {
            return Err(shape_err(
                "encoder",
                format!("adjacency has {} rows, encoder {} nodes", a.n_rows(), self.shape.node_count),
            ));
        }
        Ok(())
    }

    /// Final GRU state, read out, after running snapshots `t_i .. t_i + L`
    /// with each GCN output scaled by the matching `[1, L]` mask entry.
    pub fn encode_clip(&self, adj: &[Arc<Csr>], mask: Var<'t>, t_i: usize) -> Result<Var<'t>> {
        self.check(adj)?;
        let m = mask.value();
        if m.rows() != 1 {
            return Err(shape_err("encode_clip", format!("mask shape {:?}", m.shape())));
        }
        let len = m.cols();
        if len == 0 || t_i + len > adj.len() {
            return Err(shape_err(
                "encode_clip",
                format!("clip {t_i}+{len} outside {} snapshots", adj.len()),
            ));
        }
        let mut h = self.initial_state()?;
        for q in 0..len {
            let x = self.spatial(adj, t_i + q)?.scale_by(mask.slice_cols(q, q + 1)?)?;
            h = self.gru(x, h)?;
        }
        self.readout(h)
    }

    /// Read-out after every snapshot, in time order.
    pub fn encode_sequence(&self, adj: &[Arc<Csr>]) -> Result<Vec<Var<'t>>> {
        self.check(adj)?;
        let mut h = self.initial_state()?;
        let mut out = Vec::with_capacity(adj.len());
        for t in 0..adj.len() {
            h = self.gru(self.spatial(adj, t)?, h)?;
            out.push(self.readout(h)?);
        }
        Ok(out)
    }

    /// Clip over every snapshot with a unit mask.
    pub fn encode_full(&self, adj: &[Arc<Csr>]) -> Result<Var<'t>> {
        let ones = self.tape().constant(Tensor::filled(1, adj.len(), 1.0));
        self.encode_clip(adj, ones, 0)
    }
}

/// `encode_clip` on plain values.
pub fn encode_clip(
    params: &EncoderParams,
    graph: &DynamicGraph,
    mask: &[f64],
    t_i: usize,
) -> Result<Tensor> {
    let tape = Tape::new();
    let enc = params.bind_frozen(&tape);
    let mask = tape.constant(Tensor::row(mask));
    Ok((*enc.encode_clip(&graph.normalized(), mask, t_i)?.value()).clone())
}

pub fn encode_sequence(params: &EncoderParams, graph: &DynamicGraph) -> Result<Vec<Tensor>> {
    let tape = Tape::new();
    let enc = params.bind_frozen(&tape);
    Ok(enc
        .encode_sequence(&graph.normalized())?
        .into_iter()
        .map(|v| (*v.value()).clone())
        .collect())
}

/// `S`: the clip covering all snapshots with a unit mask.
pub fn time_invariant_final(params: &EncoderParams, graph: &DynamicGraph) -> Result<Tensor> {
    encode_clip(params, graph, &vec![1.0; graph.len()], 0)
}

/// Time-invariant table `S` and per-snapshot time-varying tables `D^t`.
///
/// A baseline (entangled) model has no `S` and full-width `D^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub s: Option<Tensor>,
    pub d: Vec<Tensor>,
}

impl RepresentationSet {
    pub fn node_count(&self) -> usize {
        self.d.first().map_or(0, Tensor::rows)
    }

    pub fn t_count(&self) -> usize {
        self.d.len()
    }

    /// `r^t = (s, d^t)`; just `d^t` when there is no `S`.
    pub fn combined(&self, t: usize) -> Tensor {
        match &self.s {
            Some(s) => Tensor::hcat(&[s, &self.d[t]]),
            None => self.d[t].clone(),
        }
    }

    /// Numbers stored per node.
    pub fn stored_per_node(&self) -> usize {
        self.s.as_ref().map_or(0, Tensor::cols) + self.d.iter().map(Tensor::cols).sum::<usize>()
    }

    /// Writes `s.emb`, `d_<t>.emb` (1-based t) and a `manifest.txt` naming them.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = fs::File::create(dir.join("manifest.txt"))?;
        if let Some(s) = &self.s {
            write_table(s, &dir.join("s.emb"))?;
            writeln!(manifest, "S s.emb")?;
        }
        for (t, d) in self.d.iter().enumerate() {
            let name = format!("d_{}.emb", t + 1);
            write_table(d, &dir.join(&name))?;
            writeln!(manifest, "D{} {name}", t + 1)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = BufReader::new(fs::File::open(dir.join("manifest.txt"))?);
        let mut s = None;
        let mut d = Vec::new();
        for (i, line) in manifest.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let (Some(key), Some(file)) = (parts.next(), parts.next()) else {
                continue;
            };
            let table = read_table(&dir.join(file))?;
            if key == "S" {
                s = Some(table);
            } else if let Some(t) = key.strip_prefix('D').and_then(|t| t.parse::<usize>().ok()) {
                if t != d.len() + 1 {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("manifest entry {key} out of order"),
                    });
                }
                d.push(table);
            } else {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown manifest key `{key}`"),
                });
            }
        }
        Ok(Self { s, d })
    }
}

fn write_table(t: &Tensor, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in 0..t.rows() {
        write!(f, "{r}")?;
        for v in t.row_slice(r) {
            write!(f, " {v:e}")?;
        }
        writeln!(f)?;
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Tensor> {
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        let Some(id) = it.next() else { continue };
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let id = id.parse().map_err(|_| bad(format!("bad node id `{id}`")))?;
        let vals = it
            .map(|x| x.parse::<f64>().map_err(|_| bad(format!("bad value `{x}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, vals));
    }
    rows.sort_by_key(|r| r.0);
    let cols = rows.first().map_or(0, |r| r.1.len());
    let n = rows.len();
    let mut data = Vec::with_capacity(n * cols);
    for (k, (id, vals)) in rows.into_iter().enumerate() {
        if id != k || vals.len() != cols {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("{}: rows must cover 0..n with equal widths", path.display()),
            });
        }
        data.extend(vals);
    }
    Ok(Tensor::from_rows(n, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_many;
    use crate::graph::Snapshot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(perm: &[usize]) -> DynamicGraph {
        let base = [
            vec![(0, 1), (1, 2), (2, 3), (4, 5)],
            vec![(0, 2), (3, 4), (4, 5), (1, 5)],
            vec![(0, 5), (1, 2), (2, 4)],
        ];
        let snaps = base
            .iter()
            .map(|es| Snapshot::from_edges(6, es.iter().map(|&(u, v)| (perm[u], perm[v]))))
            .collect();
        DynamicGraph::new(6, snaps).unwrap()
    }

    fn params(seed: u64) -> EncoderParams {
        let shape = EncoderShape {
            node_count: 6,
            hidden: 4,
            out_dim: 3,
        };
        EncoderParams::init(shape, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn unit_mask_full_range_is_time_invariant_final() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let p = params(1);
        let s = time_invariant_final(&p, &g).unwrap();
        assert_eq!(s.shape(), &[6, 3]);
        assert_eq!(s, encode_clip(&p, &g, &[1.0, 1.0, 1.0], 0).unwrap());
        assert_eq!(s, time_invariant_final(&p, &g).unwrap());
    }

    #[test]
    fn zero_mask_ignores_edges() {
        let p = params(2);
        let a = encode_clip(&p, &toy(&[0, 1, 2, 3, 4, 5]), &[0.0, 0.0], 1).unwrap();
        let empty = DynamicGraph::new(6, vec![Snapshot::empty(6); 3]).unwrap();
        let b = encode_clip(&p, &empty, &[0.0, 0.0], 1).unwrap();
        assert!(close(&a, &b, 0.0));
    }

    #[test]
    fn permutation_equivariance() {
        let perm = [3, 0, 5, 1, 4, 2];
        let p = params(3);
        let mut q = p.clone();
        // embedding row of new node perm[v] is the old row v
        let old = p.tensors()[0].clone();
        for v in 0..6 {
            for j in 0..old.cols() {
                q.tensors_mut()[0].set(perm[v], j, old.get(v, j));
            }
        }
        let a = encode_clip(&p, &toy(&[0, 1, 2, 3, 4, 5]), &[0.7, 1.0, 0.2], 0).unwrap();
        let b = encode_clip(&q, &toy(&perm), &[0.7, 1.0, 0.2], 0).unwrap();
        for v in 0..6 {
            for j in 0..3 {
                assert!((a.get(v, j) - b.get(perm[v], j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequence_shapes_and_single_snapshot_consistency() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let p = params(4);
        let seq = encode_sequence(&p, &g).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq.iter().all(|t| t.shape() == [6, 3]));
        let one = g.prefix(1);
        assert_eq!(encode_sequence(&p, &one).unwrap()[0], time_invariant_final(&p, &one).unwrap());
        assert_eq!(seq[2], time_invariant_final(&p, &g).unwrap());
    }

    #[test]
    fn sequence_is_causal() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let p = params(5);
        let mut snaps = g.snapshots().to_vec();
        snaps[2] = Snapshot::empty(6);
        let cut = DynamicGraph::new(6, snaps).unwrap();
        let a = encode_sequence(&p, &g).unwrap();
        let b = encode_sequence(&p, &cut).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn clip_ignores_snapshots_outside_range() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let p = params(6);
        let mut snaps = g.snapshots().to_vec();
        snaps[0] = Snapshot::from_edges(6, [(0, 3), (2, 5)]);
        let other = DynamicGraph::new(6, snaps).unwrap();
        assert_eq!(
            encode_clip(&p, &g, &[0.5, 1.0], 1).unwrap(),
            encode_clip(&p, &other, &[0.5, 1.0], 1).unwrap()
        );
    }

    #[test]
    fn clip_out_of_range_is_shape_error() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let err = encode_clip(&params(0), &g, &[1.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn gradients_wrt_params_and_mask() {
        let g = toy(&[0, 1, 2, 3, 4, 5]);
        let adj = g.normalized();
        let p = params(7);
        let mut inputs = p.tensors().to_vec();
        inputs.push(Tensor::row(&[0.8, 0.3, 0.6]));
        let shape = p.shape();
        let err = grad_check_many(
            |tape, xs| {
                let n = xs.len() - 1;
                let enc = Encoder::new(shape, xs[..n].to_vec());
                let _ = tape;
                let s = enc.encode_clip(&adj, xs[n], 0)?;
                let w = tape.constant(Tensor::filled(6, 3, 0.3));
                Ok(s.mul(s)?.add(s.mul(w)?)?.sum())
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn representation_dump_round_trip() {
        let dir = std::env::temp_dir().join(format!("dyted-reps-{}", std::process::id()));
        let reps = RepresentationSet {
            s: Some(Tensor::from_rows(2, 2, vec![1.0, -0.5, 0.25, 3e-9])),
            d: vec![Tensor::from_rows(2, 1, vec![0.1, 0.2]); 3],
        };
        reps.save(&dir).unwrap();
        assert_eq!(RepresentationSet::load(&dir).unwrap(), reps);
        assert_eq!(reps.combined(1).cols(), 3);
        assert_eq!(reps.stored_per_node(), 2 + 3);
        fs::remove_dir_all(dir).unwrap();
    }
}
