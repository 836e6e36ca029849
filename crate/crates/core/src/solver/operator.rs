//! The linearised MFG operator around a state, as a row generator that
//! feeds either a sparse assembly or a matrix-free product.
//!
//! Rows are keyed by the unknown they are paired with: `Var::U(k, s)` is
//! the HJB row at time node `k`, `Var::M(k, s)` the Fokker-Planck row.
//! The boundary rows are `U(nt, s)` (terminal condition) and `M(0, s)`
//! (initial condition). In the assembled system those two slices are
//! eliminated: their values are carried by a separate boundary matrix, and
//! in the nonlocal case `u(nt)` is replaced by `rhs + dg/dm * m(nt)`.

use crate::coupling::NonlocalEval;
use crate::error::Result;
use crate::grid::{Field, GridSpec, MAX_DIM};
use crate::scalar::Scalar;
use crate::solver::residual::{nonlocal_evals, slice_bundles};
use crate::solver::{CouplingSpec, ProblemSpec};
use crate::sparse::{solve_factored, LinearMethod, LinearSystem, SolveMeta, SparseLu, SparseMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Full coupled Jacobian.
    Newton,
    /// HJB rows in `u` only, density frozen.
    HjbOnly,
    /// Fokker-Planck rows in `m` only with the drift frozen.
    FpFrozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Var {
    U(usize, usize),
    M(usize, usize),
}

pub(crate) trait Sink<T> {
    fn add(&mut self, row: Var, var: Var, value: T);
}

pub(crate) struct LinearizedOperator<T> {
    grid: GridSpec<T>,
    mode: Mode,
    hp: Vec<[T; MAX_DIM]>,
    /// `d(m H_p)/dm`, or `H_p` alone with a frozen drift.
    flux: Vec<[T; MAX_DIM]>,
    /// `m H_pp`.
    w: Vec<[[T; MAX_DIM]; MAX_DIM]>,
    /// `H_m - f'(m)` for local couplings, `H_m` otherwise.
    react: Vec<T>,
    f_evals: Vec<NonlocalEval<T>>,
    g_eval: Option<NonlocalEval<T>>,
}

impl<T: Scalar> LinearizedOperator<T> {
    /// Coefficients are evaluated at `(x, m_coef, D u_coef)` node by node.
    pub(crate) fn new(problem: &ProblemSpec<T>, u_coef: &Field<T>, m_coef: &Field<T>, mode: Mode) -> Result<Self> {
        let g = *problem.grid();
        let (nt, nsp, d) = (g.nt(), g.spatial_len(), g.dim());
        let mut hp = Vec::with_capacity(g.len());
        let mut flux = Vec::with_capacity(g.len());
        let mut w = Vec::with_capacity(g.len());
        let mut react = Vec::with_capacity(g.len());
        for k in 0..=nt {
            let m = m_coef.slice(k);
            let bundles = slice_bundles(&g, problem.hamiltonian(), u_coef.slice(k), m)?;
            for (s, b) in bundles.iter().enumerate() {
                let mut fl = [T::zero(); MAX_DIM];
                let mut ww = [[T::zero(); MAX_DIM]; MAX_DIM];
                for a in 0..d {
                    fl[a] = match mode {
                        Mode::FpFrozen => b.hp[a],
                        _ => b.hp[a] + m[s] * b.hpm[a],
                    };
                    for c in 0..d {
                        ww[a][c] = m[s] * b.hpp[a][c];
                    }
                }
                let r = match (mode, problem.coupling()) {
                    (Mode::Newton, CouplingSpec::Local { f, .. }) if k < nt => b.hm - f.local_eval(m[s])?.f1,
                    _ => b.hm,
                };
                hp.push(b.hp);
                flux.push(fl);
                w.push(ww);
                react.push(r);
            }
        }
        let (f_evals, g_eval) = match (mode, nonlocal_evals(problem.coupling(), m_coef)) {
            (Mode::Newton, Some((fe, ge))) => (fe, Some(ge)),
            (Mode::HjbOnly, Some((_, ge))) => (Vec::new(), Some(ge)),
            _ => (Vec::new(), None),
        };
        debug_assert_eq!(hp.len(), (nt + 1) * nsp);
        Ok(Self {
            grid: g,
            mode,
            hp,
            flux,
            w,
            react,
            f_evals,
            g_eval,
        })
    }

    fn has_u(&self) -> bool {
        self.mode != Mode::FpFrozen
    }

    fn has_m(&self) -> bool {
        self.mode != Mode::HjbOnly
    }

    /// `dg/dm` substitution applies only when `m(nt)` is an unknown.
    fn terminal_coupling(&self) -> Option<&NonlocalEval<T>> {
        match self.mode {
            Mode::Newton => self.g_eval.as_ref(),
            _ => None,
        }
    }

    pub(crate) fn emit<S: Sink<T>>(&self, sink: &mut S, boundary_rows: bool) {
        let g = &self.grid;
        let (nt, nsp, d) = (g.nt(), g.spatial_len(), g.dim());
        let inv_dt = T::one() / g.dt();
        let inv_dx2 = T::one() / (g.dx() * g.dx());
        let half = T::one() / (T::lit(2.0) * g.dx());
        let quarter = half * half;
        let vol = g.cell_volume();
        let diag = inv_dt + T::of_usize(2 * d) * inv_dx2;

        if self.has_u() {
            for k in 0..nt {
                for s in 0..nsp {
                    let row = Var::U(k, s);
                    let n = k * nsp + s;
                    sink.add(row, Var::U(k + 1, s), -inv_dt);
                    sink.add(row, Var::U(k, s), diag);
                    for a in 0..d {
                        let hp = self.hp[n][a];
                        sink.add(row, Var::U(k, g.neighbor(s, a, true)), -inv_dx2 + hp * half);
                        sink.add(row, Var::U(k, g.neighbor(s, a, false)), -inv_dx2 - hp * half);
                    }
                    if self.mode == Mode::Newton {
                        if self.react[n] != T::zero() {
                            sink.add(row, Var::M(k, s), self.react[n]);
                        }
                        if let Some(fe) = self.f_evals.get(k) {
                            for y in 0..nsp {
                                sink.add(row, Var::M(k, y), -vol * fe.deriv(s, y));
                            }
                        }
                    }
                }
            }
            if boundary_rows {
                for s in 0..nsp {
                    sink.add(Var::U(nt, s), Var::U(nt, s), T::one());
                    if let Some(ge) = self.terminal_coupling() {
                        for y in 0..nsp {
                            sink.add(Var::U(nt, s), Var::M(nt, y), -vol * ge.deriv(s, y));
                        }
                    }
                }
            }
        }

        if self.has_m() {
            if boundary_rows {
                for s in 0..nsp {
                    sink.add(Var::M(0, s), Var::M(0, s), T::one());
                }
            }
            for k in 1..=nt {
                for s in 0..nsp {
                    let row = Var::M(k, s);
                    sink.add(row, Var::M(k, s), diag);
                    sink.add(row, Var::M(k - 1, s), -inv_dt);
                    for a in 0..d {
                        let sp = g.neighbor(s, a, true);
                        let sm = g.neighbor(s, a, false);
                        sink.add(row, Var::M(k, sp), -inv_dx2 - self.flux[k * nsp + sp][a] * half);
                        sink.add(row, Var::M(k, sm), -inv_dx2 + self.flux[k * nsp + sm][a] * half);
                        if self.mode != Mode::Newton {
                            continue;
                        }
                        for b in 0..d {
                            let wp = self.w[k * nsp + sp][a][b];
                            if wp != T::zero() {
                                sink.add(row, Var::U(k, g.neighbor(sp, b, true)), -wp * quarter);
                                sink.add(row, Var::U(k, g.neighbor(sp, b, false)), wp * quarter);
                            }
                            let wm = self.w[k * nsp + sm][a][b];
                            if wm != T::zero() {
                                sink.add(row, Var::U(k, g.neighbor(sm, b, true)), wm * quarter);
                                sink.add(row, Var::U(k, g.neighbor(sm, b, false)), -wm * quarter);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Matrix-free product with the full-form operator, boundary rows included.
    pub(crate) fn apply(&self, du: &[T], dm: &[T]) -> (Vec<T>, Vec<T>) {
        let mut sink = ApplySink {
            nsp: self.grid.spatial_len(),
            du,
            dm,
            out_u: vec![T::zero(); du.len()],
            out_m: vec![T::zero(); dm.len()],
        };
        self.emit(&mut sink, true);
        (sink.out_u, sink.out_m)
    }

    pub(crate) fn assemble(&self) -> Result<AssembledSystem<T>> {
        let layout = Layout::new(&self.grid, self.has_u(), self.has_m());
        let n = layout.len;
        let nsp = self.grid.spatial_len();
        let mut sink = AssemblySink {
            layout: &layout,
            vol: self.grid.cell_volume(),
            nt: self.grid.nt(),
            nsp,
            g_eval: self.terminal_coupling(),
            matrix: TripletBuilder::with_capacity(n, n, n * (6 + 8 * self.grid.dim())),
            boundary: TripletBuilder::new(n, 2 * nsp),
        };
        self.emit(&mut sink, false);
        let matrix = sink.matrix.build()?;
        let boundary = sink.boundary.build()?;
        Ok(AssembledSystem {
            matrix,
            boundary,
            layout,
            g_eval: self.terminal_coupling().cloned(),
            lu: None,
        })
    }
}

struct ApplySink<'a, T> {
    nsp: usize,
    du: &'a [T],
    dm: &'a [T],
    out_u: Vec<T>,
    out_m: Vec<T>,
}

impl<T: Scalar> Sink<T> for ApplySink<'_, T> {
    fn add(&mut self, row: Var, var: Var, value: T) {
        let x = match var {
            Var::U(k, s) => self.du[k * self.nsp + s],
            Var::M(k, s) => self.dm[k * self.nsp + s],
        };
        match row {
            Var::U(k, s) => self.out_u[k * self.nsp + s] += value * x,
            Var::M(k, s) => self.out_m[k * self.nsp + s] += value * x,
        }
    }
}

/// Time-interleaved numbering of the interior unknowns: slice `k` holds
/// `u(k)` (for `k < nt`) followed by `m(k)` (for `k >= 1`).
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    nsp: usize,
    nt: usize,
    has_u: bool,
    has_m: bool,
    start: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new<T: Scalar>(grid: &GridSpec<T>, has_u: bool, has_m: bool) -> Self {
        let (nt, nsp) = (grid.nt(), grid.spatial_len());
        let mut start = Vec::with_capacity(nt + 1);
        let mut off = 0;
        for k in 0..=nt {
            start.push(off);
            if has_u && k < nt {
                off += nsp;
            }
            if has_m && k >= 1 {
                off += nsp;
            }
        }
        Self {
            nsp,
            nt,
            has_u,
            has_m,
            start,
            len: off,
        }
    }

    #[inline]
    fn index(&self, var: Var) -> usize {
        match var {
            Var::U(k, s) => {
                debug_assert!(self.has_u && k < self.nt);
                self.start[k] + s
            }
            Var::M(k, s) => {
                debug_assert!(self.has_m && k >= 1);
                let skip = if self.has_u && k < self.nt { self.nsp } else { 0 };
                self.start[k] + skip + s
            }
        }
    }
}

struct AssemblySink<'a, T> {
    layout: &'a Layout,
    vol: T,
    nt: usize,
    nsp: usize,
    g_eval: Option<&'a NonlocalEval<T>>,
    matrix: TripletBuilder<T>,
    /// Columns `0..nsp`: terminal-row data; `nsp..2 nsp`: initial-row data.
    boundary: TripletBuilder<T>,
}

impl<T: Scalar> Sink<T> for AssemblySink<'_, T> {
    fn add(&mut self, row: Var, var: Var, value: T) {
        let r = self.layout.index(row);
        match var {
            Var::U(k, s) if k == self.nt => {
                self.boundary.push(r, s, value);
                if let Some(ge) = self.g_eval {
                    for y in 0..self.nsp {
                        let c = self.layout.index(Var::M(self.nt, y));
                        self.matrix.push(r, c, value * self.vol * ge.deriv(s, y));
                    }
                }
            }
            Var::M(0, s) => self.boundary.push(r, self.nsp + s, value),
            _ => self.matrix.push(r, self.layout.index(var), value),
        }
    }
}

/// The eliminated interior system with its boundary coupling.
pub(crate) struct AssembledSystem<T> {
    pub(crate) matrix: SparseMatrix<T>,
    boundary: SparseMatrix<T>,
    layout: Layout,
    g_eval: Option<NonlocalEval<T>>,
    lu: Option<SparseLu<T>>,
}

impl<T: Scalar> AssembledSystem<T> {
    /// Solves the full-form system whose right-hand side is `rhs_u`, `rhs_m`
    /// (boundary rows in `rhs_u[nt]` and `rhs_m[0]`). Returns full fields.
    pub(crate) fn solve(
        &mut self,
        rhs_u: &[T],
        rhs_m: &[T],
        method: &LinearMethod<T>,
    ) -> Result<(Vec<T>, Vec<T>, SolveMeta<T>)> {
        let l = &self.layout;
        let (nsp, nt) = (l.nsp, l.nt);
        let mut bnd = vec![T::zero(); 2 * nsp];
        if l.has_u {
            bnd[..nsp].copy_from_slice(&rhs_u[nt * nsp..]);
        }
        if l.has_m {
            bnd[nsp..].copy_from_slice(&rhs_m[..nsp]);
        }
        let coupling = self.boundary.mul_vec(&bnd);
        let mut rhs = vec![T::zero(); l.len];
        for k in 0..=nt {
            for s in 0..nsp {
                if l.has_u && k < nt {
                    rhs[l.index(Var::U(k, s))] = rhs_u[k * nsp + s];
                }
                if l.has_m && k >= 1 {
                    rhs[l.index(Var::M(k, s))] = rhs_m[k * nsp + s];
                }
            }
        }
        for (r, c) in rhs.iter_mut().zip(coupling) {
            *r -= c;
        }

        let (x, meta) = match method {
            LinearMethod::Direct => {
                if self.lu.is_none() {
                    self.lu = Some(SparseLu::factor(&self.matrix)?);
                }
                solve_factored(&self.matrix, self.lu.as_ref().expect("factor computed"), &rhs)?
            }
            LinearMethod::Iterative { .. } => {
                let mut sys = LinearSystem::new(self.matrix.clone(), rhs)?;
                let x = sys.solve(method)?;
                (x, sys.meta.expect("metadata recorded on success"))
            }
        };

        let mut du = vec![T::zero(); (nt + 1) * nsp];
        let mut dm = vec![T::zero(); (nt + 1) * nsp];
        for k in 0..=nt {
            for s in 0..nsp {
                if l.has_u && k < nt {
                    du[k * nsp + s] = x[l.index(Var::U(k, s))];
                }
                if l.has_m && k >= 1 {
                    dm[k * nsp + s] = x[l.index(Var::M(k, s))];
                }
            }
        }
        if l.has_m {
            dm[..nsp].copy_from_slice(&rhs_m[..nsp]);
        }
        if l.has_u {
            let terminal = match &self.g_eval {
                Some(ge) => ge.apply_deriv(&dm[nt * nsp..]),
                None => vec![T::zero(); nsp],
            };
            for s in 0..nsp {
                du[nt * nsp + s] = rhs_u[nt * nsp + s] + terminal[s];
            }
        }
        Ok((du, dm, meta))
    }
}
