#![allow(dead_code)]

pub mod capture_log;
pub mod http_double;
pub mod oracle;
pub mod synth;
