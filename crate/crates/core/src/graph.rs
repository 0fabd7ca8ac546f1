//! Bipartite interaction graphs, symmetric degree normalization, and the
//! stacked propagation operator used by the GCN layers.

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;
use crate::numerics::scalar::Scalar;
use crate::numerics::sparse::SparseMatrix;

/// Observed user-item interactions with the degree-normalized operator
/// `norm[u,i] = 1 / sqrt(|N_u| |N_i|)` and its transpose.
#[derive(Clone, Debug)]
pub struct InteractionGraph<S: Scalar> {
    n_users: usize,
    n_items: usize,
    edges: Vec<(usize, usize)>,
    user_degree: Vec<usize>,
    item_degree: Vec<usize>,
    norm: SparseMatrix<S>,
    norm_t: SparseMatrix<S>,
}

impl<S: Scalar> InteractionGraph<S> {
    /// Build from raw edges. Duplicates are silently collapsed; out-of-range
    /// endpoints are ingestion errors.
    pub fn build(edges: &[(usize, usize)], n_users: usize, n_items: usize) -> Result<Self> {
        let mut dedup: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, i) in edges {
            if u >= n_users || i >= n_items {
                return Err(Error::Data(format!(
                    "edge ({u},{i}) outside {n_users} users x {n_items} items"
                )));
            }
            dedup.push((u, i));
        }
        dedup.sort_unstable();
        dedup.dedup();

        let mut user_degree = vec![0usize; n_users];
        let mut item_degree = vec![0usize; n_items];
        for &(u, i) in &dedup {
            user_degree[u] += 1;
            item_degree[i] += 1;
        }
        let triplets: Vec<(usize, usize, S)> = dedup
            .iter()
            .map(|&(u, i)| {
                let w = S::one() / S::from_usize(user_degree[u] * item_degree[i]).sqrt();
                (u, i, w)
            })
            .collect();
        let norm = SparseMatrix::from_triplets(n_users, n_items, &triplets)?;
        let norm_t = norm.transpose();
        Ok(Self {
            n_users,
            n_items,
            edges: dedup,
            user_degree,
            item_degree,
            norm,
            norm_t,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn user_degree(&self) -> &[usize] {
        &self.user_degree
    }

    pub fn item_degree(&self) -> &[usize] {
        &self.item_degree
    }

    /// Normalized user-by-item operator.
    pub fn norm(&self) -> &SparseMatrix<S> {
        &self.norm
    }

    /// Normalized item-by-user operator (transpose of [`Self::norm`]).
    pub fn norm_t(&self) -> &SparseMatrix<S> {
        &self.norm_t
    }

    /// User-side aggregation of item features: `norm * x_items`.
    pub fn propagate_user_from_item(&self, x_items: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        self.norm.spmm(x_items)
    }

    /// Item-side aggregation of user features: `norm^T * x_users`.
    pub fn propagate_item_from_user(&self, x_users: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        self.norm_t.spmm(x_users)
    }

    /// Items each user interacted with, as sorted index lists.
    pub fn user_items(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n_users];
        for &(u, i) in &self.edges {
            lists[u].push(i);
        }
        lists
    }

    /// Binary interaction rows for the listed users (`len(users) x n_items`).
    pub fn interaction_rows(&self, users: &[usize]) -> DenseMatrix<S> {
        let lists = self.user_items();
        let mut out = DenseMatrix::zeros(users.len(), self.n_items);
        for (r, &u) in users.iter().enumerate() {
            for &i in &lists[u] {
                out.set(r, i, S::one());
            }
        }
        out
    }
}

/// Top-k user-item graph rebuilt from denoised interaction scores for one
/// modality. Retains the selected scores and carries the same normalization
/// rule as [`InteractionGraph`].
#[derive(Clone, Debug)]
pub struct GeneratedGraph<S: Scalar> {
    topk: usize,
    scores: SparseMatrix<S>,
    norm: SparseMatrix<S>,
    norm_t: SparseMatrix<S>,
}

impl<S: Scalar> GeneratedGraph<S> {
    /// Graph with no edges; fusion and view terms built on it vanish.
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self {
            topk: 0,
            scores: SparseMatrix::empty(n_users, n_items),
            norm: SparseMatrix::empty(n_users, n_items),
            norm_t: SparseMatrix::empty(n_items, n_users),
        }
    }

    /// Build from per-user retained `(item, score)` selections, exactly `k`
    /// per user, already chosen by the top-k rule.
    pub fn from_selections(
        n_users: usize,
        n_items: usize,
        k: usize,
        selections: &[Vec<(usize, S)>],
    ) -> Result<Self> {
        if selections.len() != n_users {
            return Err(Error::Shape(format!(
                "selections for {} users, expected {n_users}",
                selections.len()
            )));
        }
        let mut item_degree = vec![0usize; n_items];
        let mut score_triplets = Vec::with_capacity(n_users * k);
        for (u, sel) in selections.iter().enumerate() {
            if sel.len() != k {
                return Err(Error::Shape(format!(
                    "user {u} retained {} items, expected k = {k}",
                    sel.len()
                )));
            }
            for &(i, s) in sel {
                item_degree[i] += 1;
                score_triplets.push((u, i, s));
            }
        }
        let norm_triplets: Vec<(usize, usize, S)> = score_triplets
            .iter()
            .map(|&(u, i, _)| {
                let w = S::one() / S::from_usize(k * item_degree[i]).sqrt();
                (u, i, w)
            })
            .collect();
        let scores = SparseMatrix::from_triplets_signed(n_users, n_items, &score_triplets)?;
        let norm = SparseMatrix::from_triplets(n_users, n_items, &norm_triplets)?;
        let norm_t = norm.transpose();
        Ok(Self {
            topk: k,
            scores,
            norm,
            norm_t,
        })
    }

    pub fn topk(&self) -> usize {
        self.topk
    }

    pub fn n_users(&self) -> usize {
        self.norm.rows()
    }

    pub fn n_items(&self) -> usize {
        self.norm.cols()
    }

    /// Retained denoised scores per edge.
    pub fn scores(&self) -> &SparseMatrix<S> {
        &self.scores
    }

    pub fn norm(&self) -> &SparseMatrix<S> {
        &self.norm
    }

    pub fn norm_t(&self) -> &SparseMatrix<S> {
        &self.norm_t
    }
}

/// Symmetric `(U+I) x (U+I)` bipartite propagation operator with the
/// normalized adjacency in the off-diagonal blocks.
#[derive(Clone, Debug)]
pub struct StackedOperator<S: Scalar> {
    n_users: usize,
    n_items: usize,
    norm: SparseMatrix<S>,
    norm_t: SparseMatrix<S>,
}

impl<S: Scalar> StackedOperator<S> {
    pub fn from_graph(graph: &InteractionGraph<S>) -> Self {
        Self {
            n_users: graph.n_users(),
            n_items: graph.n_items(),
            norm: graph.norm().clone(),
            norm_t: graph.norm_t().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// One propagation step on stacked embeddings: the user block receives
    /// from the item block and vice versa. The operator is symmetric, so this
    /// is also its own adjoint for backward passes.
    pub fn apply(&self, z: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        if z.rows() != self.dim() {
            return Err(Error::Shape(format!(
                "stacked operator expects {} rows, got {}",
                self.dim(),
                z.rows()
            )));
        }
        let users = z.slice_rows(0, self.n_users);
        let items = z.slice_rows(self.n_users, self.n_items);
        let out_users = self.norm.spmm(&items)?;
        let out_items = self.norm_t.spmm(&users)?;
        let mut out = DenseMatrix::zeros(z.rows(), z.cols());
        out.data_mut()[..self.n_users * z.cols()].copy_from_slice(out_users.data());
        out.data_mut()[self.n_users * z.cols()..].copy_from_slice(out_items.data());
        Ok(out)
    }
}

/// Stack a user block on top of an item block.
pub fn stack_blocks<S: Scalar>(users: &DenseMatrix<S>, items: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    if users.cols() != items.cols() {
        return Err(Error::Shape(format!(
            "block widths differ: {} vs {}",
            users.cols(),
            items.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(users.rows() + items.rows(), users.cols());
    out.data_mut()[..users.rows() * users.cols()].copy_from_slice(users.data());
    out.data_mut()[users.rows() * users.cols()..].copy_from_slice(items.data());
    Ok(out)
}
