//! Boolean-circuit backend: Bristol-fashion parsing, layered evaluation in
//! the clear and over GF(2) replicated shares, and the AES-based
//! constructions used by the binary pipeline.
//!
//! Circuits are single-static-assignment gate lists over XOR/AND/INV (plus
//! EQ constants and EQW copies). XOR-family gates are local; every AND gate
//! consumes one correlated zero bit and all AND gates of one multiplicative
//! level batch into a single communication round, so a fully batched
//! evaluation costs exactly `and_depth` rounds.

mod aes;

pub use aes::{
    aes128_circuit, aes_ctr_clear, aes_ctr_shared, cbc_mac_clear, cbc_mac_shared,
    equality_select_binary, generate_aes128_bristol, AES128_BRISTOL_SHA3, AES_AND_COUNT,
};

use std::collections::VecDeque;

use crate::bits::BitVector;
use crate::engine::Session;
use crate::share::BitShareVec;
use crate::transport::SessionChannel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Xor,
    And,
    Inv,
    /// Constant assignment; the "input" is the literal 0 or 1.
    Eq,
    /// Wire copy.
    Eqw,
}

#[derive(Clone, Debug)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<usize>,
    pub output: usize,
}

/// A parsed and validated Bristol-fashion circuit.
#[derive(Clone, Debug)]
pub struct BristolCircuit {
    pub num_wires: usize,
    pub input_widths: Vec<usize>,
    pub output_widths: Vec<usize>,
    pub gates: Vec<Gate>,
    /// Gate indices in dependency order.
    topo: Vec<usize>,
    /// Multiplicative level of each gate's output wire.
    gate_level: Vec<usize>,
    pub and_count: usize,
    pub and_depth: usize,
}

impl BristolCircuit {
    pub fn num_inputs(&self) -> usize {
        self.input_widths.iter().sum()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_widths.iter().sum()
    }

    /// Wire id of the first output.
    fn output_base(&self) -> usize {
        self.num_wires - self.num_outputs()
    }

    /// Evaluates the circuit on cleartext bits, one [`BitVector`] per input
    /// group.
    pub fn eval_clear(&self, inputs: &[BitVector]) -> Result<Vec<BitVector>> {
        self.check_input_shape(inputs.iter().map(|v| v.len()))?;
        let mut wires: Vec<Option<bool>> = vec![None; self.num_wires];
        let mut w = 0;
        for group in inputs {
            for b in group.iter() {
                wires[w] = Some(b);
                w += 1;
            }
        }
        for &gi in &self.topo {
            let g = &self.gates[gi];
            let val = match g.kind {
                GateKind::Xor => wires[g.inputs[0]].unwrap() ^ wires[g.inputs[1]].unwrap(),
                GateKind::And => wires[g.inputs[0]].unwrap() & wires[g.inputs[1]].unwrap(),
                GateKind::Inv => !wires[g.inputs[0]].unwrap(),
                GateKind::Eq => g.inputs[0] == 1,
                GateKind::Eqw => wires[g.inputs[0]].unwrap(),
            };
            wires[g.output] = Some(val);
        }
        self.collect_outputs(|w| {
            wires[w].ok_or_else(|| Error::CircuitEval(format!("output wire {w} unset")))
        })
    }

    /// Evaluates many instances over shares, batching each multiplicative
    /// level across all instances into one round. Public inputs are promoted
    /// by the caller via [`BitShareVec::constant`].
    pub fn eval_shared_many<C: SessionChannel>(
        &self,
        session: &mut Session<'_, C>,
        instances: &[Vec<BitShareVec>],
    ) -> Result<Vec<Vec<BitShareVec>>> {
        let party = session.party();
        for inst in instances {
            self.check_input_shape(inst.iter().map(|v| v.len()))?;
        }
        // Per-instance wire states: (lo, hi) bits.
        let mut wires: Vec<Vec<Option<(bool, bool)>>> =
            vec![vec![None; self.num_wires]; instances.len()];
        for (inst, groups) in instances.iter().enumerate() {
            let mut w = 0;
            for group in groups {
                for i in 0..group.len() {
                    wires[inst][w] = Some((group.lo.get(i), group.hi.get(i)));
                    w += 1;
                }
            }
        }

        // Phase L: linear gates at level L, then the AND batch at level L+1.
        for level in 0..=self.and_depth {
            for &gi in &self.topo {
                let g = &self.gates[gi];
                if g.kind == GateKind::And || self.gate_level[gi] != level {
                    continue;
                }
                for inst_wires in wires.iter_mut() {
                    let val = match g.kind {
                        GateKind::Xor => {
                            let a = inst_wires[g.inputs[0]].unwrap();
                            let b = inst_wires[g.inputs[1]].unwrap();
                            (a.0 ^ b.0, a.1 ^ b.1)
                        }
                        GateKind::Inv => {
                            let a = inst_wires[g.inputs[0]].unwrap();
                            invert_share(party.0, a)
                        }
                        GateKind::Eq => constant_share(party.0, g.inputs[0] == 1),
                        GateKind::Eqw => inst_wires[g.inputs[0]].unwrap(),
                        GateKind::And => unreachable!(),
                    };
                    inst_wires[g.output] = Some(val);
                }
            }
            // Gather this level's AND gates across every instance.
            let batch: Vec<usize> = self
                .topo
                .iter()
                .copied()
                .filter(|&gi| {
                    self.gates[gi].kind == GateKind::And && self.gate_level[gi] == level + 1
                })
                .collect();
            if batch.is_empty() {
                continue;
            }
            let total = batch.len() * instances.len();
            let mut lhs = BitShareVec::zeros(party, total);
            let mut rhs = BitShareVec::zeros(party, total);
            let mut idx = 0;
            for inst_wires in wires.iter() {
                for &gi in &batch {
                    let g = &self.gates[gi];
                    let a = inst_wires[g.inputs[0]].unwrap();
                    let b = inst_wires[g.inputs[1]].unwrap();
                    lhs.lo.set(idx, a.0);
                    lhs.hi.set(idx, a.1);
                    rhs.lo.set(idx, b.0);
                    rhs.hi.set(idx, b.1);
                    idx += 1;
                }
            }
            let products = session.and_bits(&lhs, &rhs)?;
            let mut idx = 0;
            for inst_wires in wires.iter_mut() {
                for &gi in &batch {
                    inst_wires[self.gates[gi].output] =
                        Some((products.lo.get(idx), products.hi.get(idx)));
                    idx += 1;
                }
            }
        }

        instances
            .iter()
            .enumerate()
            .map(|(inst, _)| {
                let mut groups = Vec::with_capacity(self.output_widths.len());
                let mut w = self.output_base();
                for &width in &self.output_widths {
                    let mut lo = BitVector::zeros(width);
                    let mut hi = BitVector::zeros(width);
                    for i in 0..width {
                        let v = wires[inst][w].ok_or_else(|| {
                            Error::CircuitEval(format!("output wire {w} unset"))
                        })?;
                        lo.set(i, v.0);
                        hi.set(i, v.1);
                        w += 1;
                    }
                    groups.push(BitShareVec { party, lo, hi });
                }
                Ok(groups)
            })
            .collect()
    }

    pub fn eval_shared<C: SessionChannel>(
        &self,
        session: &mut Session<'_, C>,
        inputs: &[BitShareVec],
    ) -> Result<Vec<BitShareVec>> {
        Ok(self
            .eval_shared_many(session, std::slice::from_ref(&inputs.to_vec()))?
            .remove(0))
    }

    fn check_input_shape(&self, widths: impl Iterator<Item = usize>) -> Result<()> {
        let got: Vec<usize> = widths.collect();
        if got != self.input_widths {
            return Err(Error::CircuitEval(format!(
                "input widths {:?} do not match circuit header {:?}",
                got, self.input_widths
            )));
        }
        Ok(())
    }

    fn collect_outputs<F>(&self, mut read: F) -> Result<Vec<BitVector>>
    where
        F: FnMut(usize) -> Result<bool>,
    {
        let mut groups = Vec::with_capacity(self.output_widths.len());
        let mut w = self.output_base();
        for &width in &self.output_widths {
            let mut v = BitVector::zeros(width);
            for i in 0..width {
                v.set(i, read(w)?);
                w += 1;
            }
            groups.push(v);
        }
        Ok(groups)
    }

    /// Emits the circuit back out in Bristol-fashion text.
    pub fn unparse(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.gates.len(), self.num_wires));
        out.push_str(&format!("{}", self.input_widths.len()));
        for w in &self.input_widths {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
        out.push_str(&format!("{}", self.output_widths.len()));
        for w in &self.output_widths {
            out.push_str(&format!(" {w}"));
        }
        out.push_str("\n\n");
        for g in &self.gates {
            let kind = match g.kind {
                GateKind::Xor => "XOR",
                GateKind::And => "AND",
                GateKind::Inv => "INV",
                GateKind::Eq => "EQ",
                GateKind::Eqw => "EQW",
            };
            out.push_str(&format!("{} 1", g.inputs.len()));
            for i in &g.inputs {
                out.push_str(&format!(" {i}"));
            }
            out.push_str(&format!(" {} {kind}\n", g.output));
        }
        out
    }
}

fn invert_share(party: u8, a: (bool, bool)) -> (bool, bool) {
    // XOR with the constant-1 share (component r_0 flipped).
    match party {
        0 => (!a.0, a.1),
        1 => a,
        _ => (a.0, !a.1),
    }
}

fn constant_share(party: u8, c: bool) -> (bool, bool) {
    match party {
        0 => (c, false),
        1 => (false, false),
        _ => (false, c),
    }
}

/// Parses Bristol-fashion text: a `ngates nwires` header, an input-group
/// line, an output-group line, then one gate per line.
pub fn parse_bristol(text: &str) -> Result<BristolCircuit> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let fail = |line: usize, msg: String| Error::CircuitParse { line, msg };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| fail(0, "empty circuit file".into()))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    if nums.len() != 2 {
        return Err(fail(hline, "header must be 'ngates nwires'".into()));
    }
    let num_gates: usize = nums[0]
        .parse()
        .map_err(|_| fail(hline, "bad gate count".into()))?;
    let num_wires: usize = nums[1]
        .parse()
        .map_err(|_| fail(hline, "bad wire count".into()))?;

    let parse_group = |entry: Option<(usize, &str)>, what: &str| -> Result<(usize, Vec<usize>)> {
        let (line, text) = entry.ok_or_else(|| fail(0, format!("missing {what} line")))?;
        let mut it = text.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail(line, format!("bad {what} group count")))?;
        let widths: Vec<usize> = it
            .map(|t| t.parse().map_err(|_| fail(line, format!("bad {what} width"))))
            .collect::<Result<_>>()?;
        if widths.len() != n {
            return Err(fail(line, format!("{what} line declares {n} groups, lists {}", widths.len())));
        }
        Ok((line, widths))
    };
    let (_, input_widths) = parse_group(lines.next(), "input")?;
    let (_, output_widths) = parse_group(lines.next(), "output")?;
    let num_inputs: usize = input_widths.iter().sum();
    let num_outputs: usize = output_widths.iter().sum();
    if num_inputs + num_outputs > num_wires {
        return Err(fail(1, "wire count smaller than declared inputs+outputs".into()));
    }

    let mut gates = Vec::with_capacity(num_gates);
    let mut gate_lines = Vec::with_capacity(num_gates);
    let mut assigned = vec![false; num_wires];
    for w in assigned.iter_mut().take(num_inputs) {
        *w = true;
    }
    for (line, text) in lines {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(fail(line, "truncated gate line".into()));
        }
        let n_in: usize = toks[0]
            .parse()
            .map_err(|_| fail(line, "bad gate input count".into()))?;
        let n_out: usize = toks[1]
            .parse()
            .map_err(|_| fail(line, "bad gate output count".into()))?;
        if n_out != 1 {
            return Err(fail(line, format!("unsupported gate output count {n_out}")));
        }
        if toks.len() != 2 + n_in + n_out + 1 {
            return Err(fail(line, "gate line token count mismatch".into()));
        }
        let kind = match toks[toks.len() - 1] {
            "XOR" => GateKind::Xor,
            "AND" => GateKind::And,
            "INV" | "NOT" => GateKind::Inv,
            "EQ" => GateKind::Eq,
            "EQW" => GateKind::Eqw,
            other => return Err(fail(line, format!("unknown gate kind {other}"))),
        };
        let expected_inputs = match kind {
            GateKind::Xor | GateKind::And => 2,
            _ => 1,
        };
        if n_in != expected_inputs {
            return Err(fail(line, format!("gate arity {n_in} invalid for {:?}", kind)));
        }
        let mut inputs = Vec::with_capacity(n_in);
        for t in &toks[2..2 + n_in] {
            let v: usize = t.parse().map_err(|_| fail(line, "bad wire id".into()))?;
            // For EQ the "input" is the constant literal, not a wire.
            if kind != GateKind::Eq && v >= num_wires {
                return Err(fail(line, format!("input wire {v} out of range")));
            }
            if kind == GateKind::Eq && v > 1 {
                return Err(fail(line, format!("EQ constant must be 0 or 1, got {v}")));
            }
            inputs.push(v);
        }
        let output: usize = toks[2 + n_in]
            .parse()
            .map_err(|_| fail(line, "bad output wire".into()))?;
        if output >= num_wires {
            return Err(fail(line, format!("output wire {output} out of range")));
        }
        if assigned[output] {
            return Err(fail(line, format!("wire {output} assigned twice")));
        }
        assigned[output] = true;
        gates.push(Gate { kind, inputs, output });
        gate_lines.push(line);
    }
    if gates.len() != num_gates {
        return Err(fail(
            1,
            format!("header declares {num_gates} gates, file has {}", gates.len()),
        ));
    }
    // Every read wire must be assigned somewhere.
    for (gi, g) in gates.iter().enumerate() {
        if g.kind == GateKind::Eq {
            continue;
        }
        for &w in &g.inputs {
            if !assigned[w] {
                return Err(fail(gate_lines[gi], format!("dangling input wire {w}")));
            }
        }
    }
    for w in (num_wires - num_outputs)..num_wires {
        if !assigned[w] {
            return Err(fail(1, format!("output wire {w} never assigned")));
        }
    }

    // Kahn topological sort over gate dependencies; also yields levels.
    let mut producer: Vec<Option<usize>> = vec![None; num_wires];
    for (gi, g) in gates.iter().enumerate() {
        producer[g.output] = Some(gi);
    }
    let mut indegree = vec![0usize; gates.len()];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (gi, g) in gates.iter().enumerate() {
        if g.kind == GateKind::Eq {
            continue;
        }
        for &w in &g.inputs {
            if let Some(p) = producer[w] {
                indegree[gi] += 1;
                consumers[p].push(gi);
            }
        }
    }
    let mut queue: VecDeque<usize> =
        (0..gates.len()).filter(|&g| indegree[g] == 0).collect();
    let mut topo = Vec::with_capacity(gates.len());
    let mut wire_level = vec![0usize; num_wires];
    let mut gate_level = vec![0usize; gates.len()];
    while let Some(gi) = queue.pop_front() {
        topo.push(gi);
        let g = &gates[gi];
        let in_level = if g.kind == GateKind::Eq {
            0
        } else {
            g.inputs.iter().map(|&w| wire_level[w]).max().unwrap_or(0)
        };
        let level = in_level + usize::from(g.kind == GateKind::And);
        gate_level[gi] = level;
        wire_level[g.output] = level;
        for &c in &consumers[gi] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push_back(c);
            }
        }
    }
    if topo.len() != gates.len() {
        return Err(fail(1, "cyclic wire dependency".into()));
    }
    let and_count = gates.iter().filter(|g| g.kind == GateKind::And).count();
    let and_depth = gate_level
        .iter()
        .zip(&gates)
        .filter(|(_, g)| g.kind == GateKind::And)
        .map(|(&l, _)| l)
        .max()
        .unwrap_or(0);

    Ok(BristolCircuit {
        num_wires,
        input_widths,
        output_widths,
        gates,
        topo,
        gate_level,
        and_count,
        and_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "1 3\n1 2\n1 1\n\n2 1 0 1 2 AND\n";

    #[test]
    fn minimal_and_circuit() {
        let c = parse_bristol(MINIMAL).unwrap();
        assert_eq!(c.and_count, 1);
        assert_eq!(c.and_depth, 1);
        assert_eq!(c.input_widths, vec![2]);
        for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
            let out = c.eval_clear(&[BitVector::from_bits(&[a, b])]).unwrap();
            assert_eq!(out[0].get(0), a & b);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        // Wire out of range.
        let bad = "1 3\n1 2\n1 1\n\n2 1 0 9 2 AND\n";
        match parse_bristol(bad) {
            Err(Error::CircuitParse { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("out of range"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        // Unknown gate kind.
        let bad = "1 3\n1 2\n1 1\n\n2 1 0 1 2 NAND\n";
        assert!(matches!(
            parse_bristol(bad),
            Err(Error::CircuitParse { line: 5, .. })
        ));
        // Double assignment.
        let bad = "2 4\n1 2\n1 1\n\n2 1 0 1 2 AND\n2 1 0 1 2 XOR\n";
        assert!(parse_bristol(bad).is_err());
        // Bad header.
        assert!(matches!(
            parse_bristol("1\n1 2\n1 1\n"),
            Err(Error::CircuitParse { line: 1, .. })
        ));
        // Cycle: gate reads its own transitive output.
        let cyc = "2 5\n1 2\n1 1\n\n2 1 0 4 3 XOR\n2 1 3 1 4 XOR\n";
        match parse_bristol(cyc) {
            Err(Error::CircuitParse { msg, .. }) => assert!(msg.contains("cyclic")),
            other => panic!("expected cycle error, got {other:?}"),
        }
        // Dangling wire.
        let dangle = "1 4\n1 2\n1 1\n\n2 1 0 2 3 AND\n";
        match parse_bristol(dangle) {
            Err(Error::CircuitParse { msg, .. }) => assert!(msg.contains("dangling")),
            other => panic!("expected dangling error, got {other:?}"),
        }
    }

    #[test]
    fn xor_only_circuit_has_zero_depth() {
        let c = parse_bristol("2 5\n1 3\n1 1\n\n2 1 0 1 3 XOR\n2 1 3 2 4 XOR\n").unwrap();
        assert_eq!(c.and_count, 0);
        assert_eq!(c.and_depth, 0);
        let out = c
            .eval_clear(&[BitVector::from_bits(&[true, false, true])])
            .unwrap();
        assert!(!out[0].get(0));
    }

    #[test]
    fn unparse_reparse_is_semantically_identical() {
        let c = parse_bristol(MINIMAL).unwrap();
        let again = parse_bristol(&c.unparse()).unwrap();
        assert_eq!(again.and_count, c.and_count);
        assert_eq!(again.and_depth, c.and_depth);
        assert_eq!(again.gates.len(), c.gates.len());
        assert_eq!(again.input_widths, c.input_widths);
        for (a, b) in again.gates.iter().zip(&c.gates) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.inputs, b.inputs);
            assert_eq!(a.output, b.output);
        }
    }

    #[test]
    fn eq_and_eqw_gates() {
        // w3 = const 1, w4 = copy(w0), w5 = w3 XOR w4.
        let text = "3 6\n1 3\n1 1\n\n1 1 1 3 EQ\n1 1 0 4 EQW\n2 1 3 4 5 XOR\n";
        let c = parse_bristol(text).unwrap();
        let out = c
            .eval_clear(&[BitVector::from_bits(&[true, false, false])])
            .unwrap();
        assert!(!out[0].get(0)); // 1 XOR 1 = 0
    }
}
