//! Paired comparison statistics: Wilcoxon signed-rank, BCa bootstrap
//! intervals, Holm's correction and Cohen's κ.

mod bootstrap;
mod holm;
mod kappa;
pub mod normal;
mod wilcoxon;

pub use bootstrap::{bootstrap_bca, mean, median, quantile_sorted, replicates, Interval, IntervalMethod};
pub use holm::{holm_adjusted, holm_bonferroni};
pub use kappa::{cohens_kappa, read_ratings, read_ratings_text, Kappa, MAX_CATEGORY};
pub use wilcoxon::{
    wilcoxon_normal, wilcoxon_signed_rank, PairedSample, WilcoxonMethod, WilcoxonResult,
    EXACT_MAX_N,
};
