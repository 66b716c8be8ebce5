pub mod bias_sweep;
pub mod chi2;
pub mod epe_verify;
pub mod grad_check;
pub mod sigma_lab;
pub mod split;
pub mod toy_sim;
