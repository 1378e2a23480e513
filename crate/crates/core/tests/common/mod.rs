#![allow(dead_code)]

pub mod grad_oracle;
pub mod hurdle_oracle;
pub mod toy;
