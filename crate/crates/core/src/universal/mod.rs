//! The universal detector `u(<p, x>) = vm(p, x)` (guarded so that it
//! expands), program-backed detectors, and dovetailed search for `sigma_u`.

mod dovetail;
pub mod vm;

use std::sync::Arc;

use thiserror::Error;

use crate::bitstring::BitString;
use crate::detectors::{bank_detector, Detector, DetectorError, DetectorRef};

pub use dovetail::{dovetail_resume, dovetail_sigma, Frontier, UniversalReport, MAX_PAIRS};
pub use vm::{vm_eval, vm_run, Op, VmProgram};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UniversalError {
    #[error("no VM program for detector {0:?}")]
    Unsupported(String),
    #[error("frontier covers {pairs} program/input pairs, above the limit of {limit}")]
    BudgetExceeded { pairs: u128, limit: u128 },
    #[error("frontier {requested} does not contain the previous frontier {previous}")]
    FrontierShrunk { previous: Frontier, requested: Frontier },
}

/// `u(w)`: unpair `w` into a program and its input, run it, and keep the
/// result only if it is longer than `w`.
pub fn universal_eval(w: &BitString, fuel: u64) -> Option<BitString> {
    let (p, x) = w.unpair().ok()?;
    let y = vm_eval(&VmProgram::new(p), &x, fuel)?;
    (w.len() < y.len()).then_some(y)
}

/// `c_h = 2 len(p_h) + 2`: the level lost by routing `h` through `u`.
pub fn domination_constant(p: &VmProgram) -> usize {
    2 * p.len() + 2
}

/// VM programs computing the bank detectors wherever they are defined.
pub fn compile_bank_detector(name: &str) -> Result<VmProgram, UniversalError> {
    let src = match name {
        "per" => "LDP LDN LOOP EMP END",
        "cnt" => "LDN LOOP TICK END",
        "xoralt" => "LDP LOOP PAT COPY END",
        _ => return Err(UniversalError::Unsupported(name.to_string())),
    };
    Ok(src.parse().expect("bank programs are well formed"))
}

/// `u` as a detector.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniversalDetector;

impl Detector for UniversalDetector {
    fn name(&self) -> &str {
        "u"
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        universal_eval(x, fuel)
    }
}

/// A single program run as a detector, defined where it expands.
#[derive(Debug, Clone)]
pub struct VmDetector {
    name: String,
    program: VmProgram,
}

impl VmDetector {
    pub fn new(program: VmProgram) -> Self {
        VmDetector {
            name: format!("vm:{}/{}", program.code.to_hex(), program.len()),
            program,
        }
    }

    pub fn program(&self) -> &VmProgram {
        &self.program
    }
}

impl Detector for VmDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &BitString, fuel: u64) -> Option<BitString> {
        let y = vm_eval(&self.program, x, fuel)?;
        (x.len() < y.len()).then_some(y)
    }
}

/// Parses the `<hex>[/bits]` part of a `vm:` name. Without an explicit bit
/// count the code is the longest whole number of instructions that fits in
/// the hex digits.
pub fn parse_vm_name(spec: &str) -> Option<VmProgram> {
    let (hex, bits) = match spec.split_once('/') {
        Some((h, b)) => (h, Some(b.parse::<usize>().ok()?)),
        None => (spec, None),
    };
    let bits = bits.unwrap_or(4 * hex.len() / 3 * 3);
    let code = BitString::from_hex(hex, Some(bits)).ok()?;
    let p = VmProgram::new(code);
    p.decode().ok()?;
    Some(p)
}

/// Resolves bank names, `u`, and `vm:<hex>[/bits]`.
pub fn detector_by_name(name: &str) -> Result<DetectorRef, DetectorError> {
    if name == "u" {
        return Ok(Arc::new(UniversalDetector));
    }
    if let Some(spec) = name.strip_prefix("vm:") {
        return parse_vm_name(spec)
            .map(|p| Arc::new(VmDetector::new(p)) as DetectorRef)
            .ok_or_else(|| DetectorError::UnknownDetector(name.to_string()));
    }
    bank_detector(name)
}
