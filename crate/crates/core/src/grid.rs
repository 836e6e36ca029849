//! Uniform periodic space-time grids on the unit torus and the discrete
//! differential operators used by both equations of the system.
//!
//! Spatial nodes are numbered row-major: in two dimensions node `s`
//! has multi-index `(i, j) = (s / nx, s % nx)` and axis 0 runs along `i`.
//! A [`Field`] stores `nt + 1` time slices back to back.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    dim: usize,
    nx: usize,
    nt: usize,
    horizon: T,
    dx: T,
    dt: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(dim: usize, nx: usize, nt: usize, horizon: T) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if nx < 4 {
            return Err(Error::InvalidGrid(format!("nx must be at least 4, got {nx}")));
        }
        if nt < 2 {
            return Err(Error::InvalidGrid(format!("nt must be at least 2, got {nt}")));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self {
            dim,
            nx,
            nt,
            horizon,
            dx: T::one() / T::of_usize(nx),
            dt: horizon / T::of_usize(nt),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Number of spatial nodes, `nx^dim`.
    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    /// Number of space-time nodes, `(nt + 1) nx^dim`.
    pub fn len(&self) -> usize {
        (self.nt + 1) * self.spatial_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one spatial node, `dx^dim`.
    pub fn cell_volume(&self) -> T {
        self.dx.powi(self.dim as i32)
    }

    pub fn time(&self, k: usize) -> T {
        T::of_usize(k) * self.dt
    }

    fn stride(&self, axis: usize) -> usize {
        self.nx.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, s: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [s, 0],
            _ => [s / self.nx, s % self.nx],
        }
    }

    /// Coordinate of node `s` along `axis`, in `[0, 1)`.
    pub fn coordinate(&self, s: usize, axis: usize) -> T {
        T::of_usize(self.multi_index(s)[axis]) * self.dx
    }

    /// Periodic neighbour of `s` one step forward or backward along `axis`.
    #[inline]
    pub fn neighbor(&self, s: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let idx = (s / stride) % self.nx;
        match (forward, idx) {
            (true, i) if i == self.nx - 1 => s - (self.nx - 1) * stride,
            (true, _) => s + stride,
            (false, 0) => s + (self.nx - 1) * stride,
            (false, _) => s - stride,
        }
    }

    /// Node reached from `s` by the periodic displacement of node `disp`.
    pub fn shift(&self, s: usize, disp: usize) -> usize {
        let a = self.multi_index(s);
        let b = self.multi_index(disp);
        let i = (a[0] + b[0]) % self.nx;
        match self.dim {
            1 => i,
            _ => i * self.nx + (a[1] + b[1]) % self.nx,
        }
    }

    /// Displacement node `x - y` on the torus.
    pub fn difference(&self, x: usize, y: usize) -> usize {
        let a = self.multi_index(x);
        let b = self.multi_index(y);
        let i = (a[0] + self.nx - b[0]) % self.nx;
        match self.dim {
            1 => i,
            _ => i * self.nx + (a[1] + self.nx - b[1]) % self.nx,
        }
    }

    /// Centered difference of a spatial slice along one axis.
    pub fn gradient_axis_into(&self, f: &[T], axis: usize, out: &mut [T]) {
        let inv = T::one() / (T::lit(2.0) * self.dx);
        for (s, o) in out.iter_mut().enumerate() {
            *o = (f[self.neighbor(s, axis, true)] - f[self.neighbor(s, axis, false)]) * inv;
        }
    }

    /// Centered gradient of a spatial slice, one vector per axis.
    pub fn gradient_slice(&self, f: &[T]) -> Vec<Vec<T>> {
        (0..self.dim)
            .map(|axis| {
                let mut out = vec![T::zero(); self.spatial_len()];
                self.gradient_axis_into(f, axis, &mut out);
                out
            })
            .collect()
    }

    /// Centered divergence of a spatial vector slice; the negative adjoint
    /// of [`GridSpec::gradient_slice`] under the unweighted inner product.
    pub fn divergence_slice<V: AsRef<[T]>>(&self, components: &[V]) -> Vec<T> {
        let mut out = vec![T::zero(); self.spatial_len()];
        let inv = T::one() / (T::lit(2.0) * self.dx);
        for (axis, comp) in components.iter().enumerate().take(self.dim) {
            let comp = comp.as_ref();
            for (s, o) in out.iter_mut().enumerate() {
                *o += (comp[self.neighbor(s, axis, true)] - comp[self.neighbor(s, axis, false)]) * inv;
            }
        }
        out
    }

    /// Compact `(2 dim + 1)`-point Laplacian of a spatial slice.
    pub fn laplacian_slice(&self, f: &[T]) -> Vec<T> {
        let inv = T::one() / (self.dx * self.dx);
        let two = T::lit(2.0);
        (0..self.spatial_len())
            .map(|s| {
                (0..self.dim).fold(T::zero(), |acc, axis| {
                    acc + (f[self.neighbor(s, axis, true)] - two * f[s] + f[self.neighbor(s, axis, false)])
                        * inv
                })
            })
            .collect()
    }

    /// `dx^dim` times the sum of a spatial slice.
    pub fn slice_mass(&self, f: &[T]) -> T {
        f.iter().fold(T::zero(), |acc, &v| acc + v) * self.cell_volume()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    ValueFunction,
    Density,
    Perturbation,
}

/// Scalar field on every node of a space-time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: GridSpec<T>,
    role: FieldRole,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn new(grid: GridSpec<T>, role: FieldRole, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at index {pos}")));
        }
        Ok(Self { grid, role, values })
    }

    pub fn zeros(grid: GridSpec<T>, role: FieldRole) -> Self {
        Self {
            grid,
            role,
            values: vec![T::zero(); grid.len()],
        }
    }

    /// Samples `f(t, x)` where `x` holds the node's coordinates.
    pub fn from_fn(grid: GridSpec<T>, role: FieldRole, f: impl Fn(T, &[T]) -> T) -> Result<Self> {
        let nsp = grid.spatial_len();
        let mut values = Vec::with_capacity(grid.len());
        let mut x = [T::zero(); MAX_DIM];
        for k in 0..=grid.nt() {
            let t = grid.time(k);
            for s in 0..nsp {
                for (axis, xa) in x.iter_mut().enumerate().take(grid.dim()) {
                    *xa = grid.coordinate(s, axis);
                }
                values.push(f(t, &x[..grid.dim()]));
            }
        }
        Self::new(grid, role, values)
    }

    pub fn from_slices(grid: GridSpec<T>, role: FieldRole, slices: &[Vec<T>]) -> Result<Self> {
        Self::new(grid, role, slices.concat())
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[T] {
        let n = self.grid.spatial_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, s: usize) -> T {
        self.values[k * self.grid.spatial_len() + s]
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        if other.grid != self.grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, self.role, values)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.grid, self.role, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn slice_masses(&self) -> Vec<T> {
        (0..=self.grid.nt()).map(|k| self.grid.slice_mass(self.slice(k))).collect()
    }

    /// Writes `k,t,i[,j],value` rows, time-major, with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        match g.dim() {
            1 => writeln!(w, "k,t,i,value")?,
            _ => writeln!(w, "k,t,i,j,value")?,
        }
        for k in 0..=g.nt() {
            let t = g.time(k).as_f64();
            for (s, v) in self.slice(k).iter().enumerate() {
                let idx = g.multi_index(s);
                match g.dim() {
                    1 => writeln!(w, "{k},{t:.16e},{},{:.16e}", idx[0], v.as_f64())?,
                    _ => writeln!(w, "{k},{t:.16e},{},{},{:.16e}", idx[0], idx[1], v.as_f64())?,
                }
            }
        }
        Ok(())
    }
}

/// Vector field with one [`Field`]-shaped component per spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    grid: GridSpec<T>,
    components: Vec<Field<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn new(components: Vec<Field<T>>) -> Result<Self> {
        let grid = *components
            .first()
            .ok_or_else(|| Error::InvalidInput("vector field needs components".into()))?
            .grid();
        if components.len() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "vector field has {} components on a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(Error::InvalidInput("components live on different grids".into()));
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self {
            grid,
            components: (0..grid.dim()).map(|_| Field::zeros(grid, FieldRole::Perturbation)).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn components(&self) -> &[Field<T>] {
        &self.components
    }

    pub fn slice(&self, k: usize) -> Vec<&[T]> {
        self.components.iter().map(|c| c.slice(k)).collect()
    }

    /// Largest Euclidean length over all nodes.
    pub fn sup_norm(&self) -> T {
        (0..self.grid.len())
            .map(|n| {
                self.components
                    .iter()
                    .fold(T::zero(), |acc, c| acc + c.values()[n] * c.values()[n])
                    .sqrt()
            })
            .fold(T::zero(), T::max)
    }
}

pub fn gradient<T: Scalar>(f: &Field<T>, k: usize) -> Vec<Vec<T>> {
    f.grid().gradient_slice(f.slice(k))
}

pub fn divergence<T: Scalar>(field: &VectorField<T>, k: usize) -> Vec<T> {
    field.grid().divergence_slice(&field.slice(k))
}

pub fn laplacian<T: Scalar>(f: &Field<T>, k: usize) -> Vec<T> {
    f.grid().laplacian_slice(f.slice(k))
}

/// Discrete sup-norms and slice masses of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct Norms<T> {
    /// Largest absolute nodal value.
    pub c0: T,
    /// `c0` plus the largest Euclidean length of the discrete gradient.
    pub c10: T,
    pub mass_per_slice: Vec<T>,
}

/// Norms of `f`, or of `f - reference` when a reference is given.
pub fn norms<T: Scalar>(f: &Field<T>, reference: Option<&Field<T>>) -> Result<Norms<T>> {
    let diff;
    let f = match reference {
        Some(r) => {
            diff = f.zip_map(r, |a, b| a - b)?;
            &diff
        }
        None => f,
    };
    let g = f.grid();
    let c0 = crate::scalar::sup_norm(f.values());
    let mut grad_sup = T::zero();
    for k in 0..=g.nt() {
        let grad = gradient(f, k);
        for s in 0..g.spatial_len() {
            let len = grad.iter().fold(T::zero(), |acc, c| acc + c[s] * c[s]).sqrt();
            grad_sup = grad_sup.max(len);
        }
    }
    Ok(Norms {
        c0,
        c10: c0 + grad_sup,
        mass_per_slice: f.slice_masses(),
    })
}
