pub mod extended;
pub mod grad;
pub mod rules;
