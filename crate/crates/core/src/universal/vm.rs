//! A small stream-description machine.
//!
//! Programs are sequences of 3-bit instructions. The machine has a read-once
//! input tape, an append-only output tape, a pattern register `P` with a
//! cyclic cursor, an unbounded counter `N`, and a private counting-stream
//! generator. A run halts successfully at the end of the code or when `COPY`
//! finds the input exhausted; every other failure leaves the output
//! undefined.
//!
//! | bits | op   | effect |
//! |------|------|--------|
//! | 000  | COPY | emit the next input bit; halt if the input is exhausted |
//! | 001  | LDP  | read a doubled-bit string ended by `01` into `P`, reset the cursor |
//! | 010  | LDN  | read the rest of the input as a binary numeral into `N` |
//! | 011  | EMP  | emit all of `P` |
//! | 100  | PAT  | emit `P` at the cursor and advance it cyclically |
//! | 101  | TICK | emit the next bit of `bin(0) bin(1) bin(2) ...` |
//! | 110  | LOOP | loop head (no effect) |
//! | 111  | END  | `N = 0`: jump back to the loop head; otherwise decrement and jump back unless `N` reached 0 |
//!
//! Fuel: one unit per executed instruction plus one per bit read or written.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bitstring::BitString;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Copy,
    Ldp,
    Ldn,
    Emp,
    Pat,
    Tick,
    Loop,
    End,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Copy,
        Op::Ldp,
        Op::Ldn,
        Op::Emp,
        Op::Pat,
        Op::Tick,
        Op::Loop,
        Op::End,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Op {
        Op::ALL[(code & 7) as usize]
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Op::Copy => "COPY",
            Op::Ldp => "LDP",
            Op::Ldn => "LDN",
            Op::Emp => "EMP",
            Op::Pat => "PAT",
            Op::Tick => "TICK",
            Op::Loop => "LOOP",
            Op::End => "END",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("code length {0} is not a multiple of 3")]
    Ragged(usize),
    #[error("unmatched LOOP at instruction {0}")]
    UnmatchedLoop(usize),
    #[error("unmatched END at instruction {0}")]
    UnmatchedEnd(usize),
    #[error("unknown mnemonic {0:?}")]
    UnknownMnemonic(String),
}

/// Why a run produced no output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Encoding(EncodingError),
    /// `LDP` hit the end of the input or a `10` digram.
    BadPattern,
    /// `LDN` read a numeral that does not fit the counter.
    CounterOverflow,
    /// `PAT` with an empty pattern register.
    EmptyPattern,
    OutOfFuel,
    /// The machine revisited a loop state without progress.
    Diverges,
    /// The output left the caller's filter (see [`Filter`]).
    Rejected,
}

/// Raw program bits.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VmProgram {
    pub code: BitString,
}

impl VmProgram {
    pub fn new(code: BitString) -> Self {
        VmProgram { code }
    }

    pub fn from_ops(ops: &[Op]) -> Self {
        let mut code = BitString::with_capacity(3 * ops.len());
        for op in ops {
            code.extend_from(&BitString::from_u64(op.code() as u64, 3));
        }
        VmProgram { code }
    }

    /// Decodes the instruction stream and resolves loop brackets.
    pub fn decode(&self) -> Result<Decoded, EncodingError> {
        let n = self.code.len();
        if !n.is_multiple_of(3) {
            return Err(EncodingError::Ragged(n));
        }
        let ops: Vec<Op> = (0..n / 3)
            .map(|i| {
                let c = (self.code.get(3 * i) as u8) << 2
                    | (self.code.get(3 * i + 1) as u8) << 1
                    | self.code.get(3 * i + 2) as u8;
                Op::from_code(c)
            })
            .collect();
        Decoded::new(ops)
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }
}

impl fmt::Debug for VmProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decode() {
            Ok(d) => write!(f, "VmProgram({d})"),
            Err(_) => write!(f, "VmProgram({:?})", self.code),
        }
    }
}

/// Whitespace-separated mnemonics, e.g. `"LDP LDN LOOP EMP END"`.
impl FromStr for VmProgram {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ops = s
            .split_whitespace()
            .map(|m| {
                Op::ALL
                    .into_iter()
                    .find(|op| op.mnemonic().eq_ignore_ascii_case(m))
                    .ok_or_else(|| EncodingError::UnknownMnemonic(m.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = VmProgram::from_ops(&ops);
        p.decode()?;
        Ok(p)
    }
}

/// A validated instruction list with its bracket table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    ops: Vec<Op>,
    /// For an `END` at `i`, the index of its `LOOP`; unused elsewhere.
    head: Vec<usize>,
}

impl Decoded {
    fn new(ops: Vec<Op>) -> Result<Self, EncodingError> {
        let mut head = vec![0; ops.len()];
        let mut stack = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            match op {
                Op::Loop => stack.push(i),
                Op::End => head[i] = stack.pop().ok_or(EncodingError::UnmatchedEnd(i))?,
                _ => {}
            }
        }
        if let Some(&i) = stack.first() {
            return Err(EncodingError::UnmatchedLoop(i));
        }
        Ok(Decoded { ops, head })
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn run(&self, x: &BitString, fuel: u64, filter: Filter<'_>) -> Outcome {
        Machine::new(self, x, fuel, filter).run()
    }
}

impl fmt::Display for Decoded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.ops.iter().map(|op| op.mnemonic()).collect();
        f.write_str(&names.join(" "))
    }
}

/// Lets a caller abandon runs whose output is already known to be useless.
#[derive(Debug, Clone, Copy)]
pub enum Filter<'a> {
    None,
    /// Abort as soon as the output stops being a prefix of this string.
    PrefixOf(&'a BitString),
    /// Abort once the output exceeds this many bits.
    MaxLen(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub result: Result<BitString, Fault>,
    /// Fuel consumed, including by a failed run.
    pub steps: u64,
}

struct Machine<'a> {
    prog: &'a Decoded,
    input: &'a BitString,
    fuel: u64,
    filter: Filter<'a>,
    steps: u64,
    pc: usize,
    pos: usize,
    out: BitString,
    pattern: BitString,
    cursor: usize,
    counter: u64,
    tick_n: u64,
    tick_pos: u32,
    /// Last state seen at each loop jump-back, for divergence detection.
    seen: Vec<Option<LoopState>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LoopState {
    pos: usize,
    out_len: usize,
    cursor: usize,
    counter: u64,
    tick: (u64, u32),
}

impl<'a> Machine<'a> {
    fn new(prog: &'a Decoded, input: &'a BitString, fuel: u64, filter: Filter<'a>) -> Self {
        Machine {
            prog,
            input,
            fuel,
            filter,
            steps: 0,
            pc: 0,
            pos: 0,
            out: BitString::new(),
            pattern: BitString::new(),
            cursor: 0,
            counter: 0,
            tick_n: 0,
            tick_pos: 0,
            seen: vec![None; prog.ops.len()],
        }
    }

    fn charge(&mut self, units: u64) -> Result<(), Fault> {
        self.steps = self.steps.saturating_add(units);
        if self.steps > self.fuel {
            Err(Fault::OutOfFuel)
        } else {
            Ok(())
        }
    }

    fn emit(&mut self, bit: bool) -> Result<(), Fault> {
        self.charge(1)?;
        let i = self.out.len();
        match self.filter {
            Filter::PrefixOf(t) if i >= t.len() || t.get(i) != bit => return Err(Fault::Rejected),
            Filter::MaxLen(n) if i >= n => return Err(Fault::Rejected),
            _ => {}
        }
        self.out.push(bit);
        Ok(())
    }

    fn read(&mut self) -> Result<Option<bool>, Fault> {
        if self.pos >= self.input.len() {
            return Ok(None);
        }
        self.charge(1)?;
        self.pos += 1;
        Ok(Some(self.input.get(self.pos - 1)))
    }

    fn tick(&mut self) -> bool {
        let width = (64 - self.tick_n.leading_zeros()).max(1);
        let bit = (self.tick_n >> (width - 1 - self.tick_pos)) & 1 == 1;
        self.tick_pos += 1;
        if self.tick_pos == width {
            self.tick_pos = 0;
            self.tick_n += 1;
        }
        bit
    }

    fn run(mut self) -> Outcome {
        let result = self.exec().map(|()| std::mem::take(&mut self.out));
        Outcome {
            result,
            steps: self.steps,
        }
    }

    fn exec(&mut self) -> Result<(), Fault> {
        let ops = &self.prog.ops;
        while self.pc < ops.len() {
            self.charge(1)?;
            let op = ops[self.pc];
            self.pc += 1;
            match op {
                Op::Copy => match self.read()? {
                    Some(b) => self.emit(b)?,
                    None => return Ok(()),
                },
                Op::Ldp => {
                    let mut p = BitString::new();
                    loop {
                        let a = self.read()?.ok_or(Fault::BadPattern)?;
                        let b = self.read()?.ok_or(Fault::BadPattern)?;
                        match (a, b) {
                            (false, true) => break,
                            (true, false) => return Err(Fault::BadPattern),
                            (bit, _) => p.push(bit),
                        }
                    }
                    self.pattern = p;
                    self.cursor = 0;
                }
                Op::Ldn => {
                    let mut n: u64 = 0;
                    while let Some(b) = self.read()? {
                        n = n
                            .checked_mul(2)
                            .and_then(|v| v.checked_add(b as u64))
                            .ok_or(Fault::CounterOverflow)?;
                    }
                    self.counter = n;
                }
                Op::Emp => {
                    for i in 0..self.pattern.len() {
                        let b = self.pattern.get(i);
                        self.emit(b)?;
                    }
                }
                Op::Pat => {
                    if self.pattern.is_empty() {
                        return Err(Fault::EmptyPattern);
                    }
                    let b = self.pattern.get(self.cursor);
                    self.cursor = (self.cursor + 1) % self.pattern.len();
                    self.emit(b)?;
                }
                Op::Tick => {
                    let b = self.tick();
                    self.emit(b)?;
                }
                Op::Loop => {}
                Op::End => {
                    let at = self.pc - 1;
                    let back = if self.counter == 0 {
                        true
                    } else {
                        self.counter -= 1;
                        self.counter > 0
                    };
                    if back {
                        let state = LoopState {
                            pos: self.pos,
                            out_len: self.out.len(),
                            cursor: self.cursor,
                            counter: self.counter,
                            tick: (self.tick_n, self.tick_pos),
                        };
                        // Nothing read means P is unchanged too, so an equal
                        // state here repeats forever.
                        if self.seen[at] == Some(state) {
                            return Err(Fault::Diverges);
                        }
                        self.seen[at] = Some(state);
                        self.pc = self.prog.head[at] + 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `p` on `x`; `None` when undefined within `fuel`.
pub fn vm_eval(p: &VmProgram, x: &BitString, fuel: u64) -> Option<BitString> {
    vm_run(p, x, fuel).result.ok()
}

/// Like [`vm_eval`] but reports the fault and the fuel consumed.
pub fn vm_run(p: &VmProgram, x: &BitString, fuel: u64) -> Outcome {
    match p.decode() {
        Ok(d) => d.run(x, fuel, Filter::None),
        Err(e) => Outcome {
            result: Err(Fault::Encoding(e)),
            steps: 0,
        },
    }
}

/// Every well-formed program of exactly `len` bits, in lexicographic order
/// of their code.
pub fn programs_of_len(len: usize) -> Vec<Decoded> {
    if !len.is_multiple_of(3) {
        return Vec::new();
    }
    let n = len / 3;
    let mut out = Vec::new();
    let mut ops = Vec::with_capacity(n);
    fn rec(n: usize, depth: usize, ops: &mut Vec<Op>, out: &mut Vec<Decoded>) {
        if ops.len() == n {
            if depth == 0 {
                out.push(Decoded::new(ops.clone()).expect("balanced by construction"));
            }
            return;
        }
        for op in Op::ALL {
            let d = match op {
                Op::Loop => depth + 1,
                Op::End if depth == 0 => continue,
                Op::End => depth - 1,
                _ => depth,
            };
            // leave room to close every open loop
            if d > n - ops.len() - 1 {
                continue;
            }
            ops.push(op);
            rec(n, d, ops, out);
            ops.pop();
        }
    }
    rec(n, 0, &mut ops, &mut out);
    out
}

impl Decoded {
    pub fn program(&self) -> VmProgram {
        VmProgram::from_ops(&self.ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstring::bits;

    fn prog(s: &str) -> VmProgram {
        s.parse().unwrap()
    }

    #[test]
    fn straight_line() {
        let p = prog("LDP EMP");
        let x = BitString::pair(&bits("01"), &BitString::new());
        assert_eq!(vm_eval(&p, &x, 100), Some(bits("01")));
        assert_eq!(vm_eval(&prog("COPY COPY"), &bits("10"), 100), Some(bits("10")));
        // COPY halts on exhausted input
        assert_eq!(vm_eval(&prog("COPY COPY TICK"), &bits("1"), 100), Some(bits("1")));
        assert_eq!(vm_eval(&VmProgram::new(BitString::new()), &bits("1"), 0), Some(BitString::new()));
    }

    #[test]
    fn encoding_errors() {
        let unmatched = VmProgram::from_ops(&[Op::Loop, Op::Tick]);
        for x in BitString::all_up_to(4) {
            assert_eq!(vm_eval(&unmatched, &x, 1 << 20), None);
        }
        let stray = VmProgram::from_ops(&[Op::Tick, Op::End]);
        assert!(matches!(
            vm_run(&stray, &BitString::new(), 100).result,
            Err(Fault::Encoding(EncodingError::UnmatchedEnd(1)))
        ));
        assert_eq!(vm_eval(&VmProgram::new(bits("1010")), &BitString::new(), 100), None);
        assert!("LDP FOO".parse::<VmProgram>().is_err());
    }

    #[test]
    fn counted_loop_and_fuel() {
        let p = prog("LDP LDN LOOP EMP END");
        let x = BitString::pair(&bits("01"), &BitString::binary(20));
        let out = vm_run(&p, &x, 1 << 20);
        assert_eq!(out.result, Ok(bits("01").repeat(20)));
        let need = out.steps;
        assert_eq!(vm_eval(&p, &x, need), Some(bits("01").repeat(20)));
        assert_eq!(vm_eval(&p, &x, need - 1), None);
        assert_eq!(vm_eval(&p, &x, 10), None);
    }

    #[test]
    fn unbounded_loops() {
        // N = 0 loops forever; only COPY can stop it
        let x = BitString::pair(&bits("01"), &bits("1110111"));
        let out = vm_eval(&prog("LDP LOOP PAT COPY END"), &x, 1 << 20);
        assert_eq!(out, Some(bits("011101100111011")));
        let r = vm_run(&prog("LOOP END"), &BitString::new(), 1 << 20);
        assert_eq!(r.result, Err(Fault::Diverges));
        assert!(r.steps < 10);
        let r = vm_run(&prog("LOOP TICK END"), &BitString::new(), 1000);
        assert_eq!(r.result, Err(Fault::OutOfFuel));
    }

    #[test]
    fn faults() {
        let r = vm_run(&prog("LDP"), &bits("0010"), 100);
        assert_eq!(r.result, Err(Fault::BadPattern));
        let r = vm_run(&prog("LDP"), &bits("00"), 100);
        assert_eq!(r.result, Err(Fault::BadPattern));
        let r = vm_run(&prog("PAT"), &BitString::new(), 100);
        assert_eq!(r.result, Err(Fault::EmptyPattern));
        let r = vm_run(&prog("LDN"), &bits("1").repeat(65), 1000);
        assert_eq!(r.result, Err(Fault::CounterOverflow));
    }

    #[test]
    fn filters_abort_early() {
        let d = prog("LOOP TICK END").decode().unwrap();
        let target = bits("0110");
        let r = d.run(&BitString::new(), 1 << 20, Filter::PrefixOf(&target));
        assert_eq!(r.result, Err(Fault::Rejected));
        assert!(r.steps < 20);
        let r = d.run(&BitString::new(), 1 << 20, Filter::MaxLen(5));
        assert_eq!(r.result, Err(Fault::Rejected));
    }

    #[test]
    fn fuel_monotone_prefixes() {
        // a run cut short by fuel never contradicts the completed run
        let p = prog("LDN LOOP TICK END").decode().unwrap();
        let x = BitString::binary(40);
        let full = p.run(&x, 1 << 20, Filter::None).result.unwrap();
        for fuel in 0..200 {
            if let Ok(out) = p.run(&x, fuel, Filter::None).result {
                assert_eq!(out, full);
            }
        }
    }

    #[test]
    fn program_enumeration() {
        for len in [0, 3, 6, 9, 12] {
            let listed = programs_of_len(len);
            let brute: Vec<VmProgram> = BitString::all_of_len(len)
                .map(VmProgram::new)
                .filter(|p| p.decode().is_ok())
                .collect();
            let listed: Vec<VmProgram> = listed.iter().map(Decoded::program).collect();
            assert_eq!(listed, brute, "length {len}");
        }
        assert!(programs_of_len(4).is_empty());
    }
}
