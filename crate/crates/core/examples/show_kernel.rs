use std::collections::BTreeMap;

use etch_core::codegen::{emit_c, lower, CSemiring};
use etch_core::expr::{infer_sorts, parse, preset, VarSig};
use etch_core::formats::TensorFormat;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "mmul1".into());
    let p = preset(&name).unwrap();
    let sigs: BTreeMap<String, VarSig> = p
        .vars
        .iter()
        .map(|(n, r)| (n.to_string(), VarSig::new(vec![16; *r])))
        .collect();
    let sorted = infer_sorts(&parse(p.expr).unwrap(), &sigs, Some(&p.order_names())).unwrap();
    let formats = p.vars.iter().map(|(n, _)| (n.to_string(), TensorFormat::Dcsr)).collect();
    let k = lower(&sorted, &formats).unwrap();
    print!("{}", emit_c(&k, &name, CSemiring::Arithmetic));
}
