use std::fmt::Write;

use crate::ir::{Attr, Function, Op, Operand, Program, Type, TypedOperand};

/// Canonical text of a program. Byte-stable for equal programs.
pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for t in &program.opaque_types {
        let _ = writeln!(out, "%{t} = type opaque");
    }
    let mut prev_was_decl = None;
    for f in &program.functions {
        let is_decl = f.is_declaration();
        match prev_was_decl {
            None => {
                if !program.opaque_types.is_empty() {
                    out.push('\n');
                }
            }
            Some(true) if is_decl => {}
            Some(_) => out.push('\n'),
        }
        print_function(&mut out, f);
        prev_was_decl = Some(is_decl);
    }
    out
}

fn print_attrs(out: &mut String, attrs: &[Attr]) {
    for a in attrs {
        match &a.value {
            Some(v) => {
                let _ = write!(out, " \"{}\"=\"{}\"", a.key, v);
            }
            None => {
                let _ = write!(out, " \"{}\"", a.key);
            }
        }
    }
}

fn print_function(out: &mut String, f: &Function) {
    let params: Vec<String> = f
        .params
        .iter()
        .map(|p| match (&p.name, f.is_declaration()) {
            (Some(n), false) => format!("{} %{n}", p.ty),
            _ => p.ty.to_string(),
        })
        .collect();
    let kw = if f.is_declaration() { "declare" } else { "define" };
    let _ = write!(out, "{kw} {} @{}({})", f.ret, f.name, params.join(", "));
    print_attrs(out, &f.attrs);
    let Some(blocks) = &f.blocks else {
        out.push('\n');
        return;
    };
    out.push_str(" {\n");
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}:", b.label);
        for inst in &b.instructions {
            out.push_str("  ");
            if let Some(r) = &inst.result {
                let _ = write!(out, "%{r} = ");
            }
            print_op(out, &inst.op);
            out.push('\n');
        }
    }
    out.push_str("}\n");
}

pub(crate) fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn print_operand(out: &mut String, ty: &Type, v: &Operand) {
    match v {
        Operand::Local(n) => {
            let _ = write!(out, "%{n}");
        }
        Operand::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Operand::Float(x) => out.push_str(&format_float(*x)),
        Operand::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Operand::Null => out.push_str("null"),
        Operand::IntToPtr { value, ty } => {
            let _ = write!(out, "inttoptr (i64 {value} to {ty})");
        }
        Operand::IntList(items) => {
            let elem = match ty {
                Type::Array(_, e) => e.to_string(),
                _ => "i32".to_string(),
            };
            let parts: Vec<String> = items.iter().map(|i| format!("{elem} {i}")).collect();
            let _ = write!(out, "[{}]", parts.join(", "));
        }
    }
}

pub(crate) fn typed_operand_text(t: &TypedOperand) -> String {
    let mut s = String::new();
    print_typed(&mut s, t);
    s
}

fn print_typed(out: &mut String, t: &TypedOperand) {
    let _ = write!(out, "{} ", t.ty);
    print_operand(out, &t.ty, &t.value);
}

fn print_op(out: &mut String, op: &Op) {
    match op {
        Op::Call {
            callee,
            ret,
            args,
            attrs,
        } => {
            let _ = write!(out, "call {ret} @{callee}(");
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_typed(out, a);
            }
            out.push(')');
            print_attrs(out, attrs);
        }
        Op::Icmp { pred, ty, lhs, rhs } => {
            let _ = write!(out, "icmp {} {ty} ", pred.keyword());
            print_operand(out, ty, lhs);
            out.push_str(", ");
            print_operand(out, ty, rhs);
        }
        Op::Binary { op, ty, lhs, rhs } => {
            let _ = write!(out, "{} {ty} ", op.keyword());
            print_operand(out, ty, lhs);
            out.push_str(", ");
            print_operand(out, ty, rhs);
        }
        Op::Br { dest } => {
            let _ = write!(out, "br label %{dest}");
        }
        Op::CondBr {
            cond,
            then_dest,
            else_dest,
        } => {
            out.push_str("br i1 ");
            print_operand(out, &Type::i1(), cond);
            let _ = write!(out, ", label %{then_dest}, label %{else_dest}");
        }
        Op::Ret { value } => match value {
            None => out.push_str("ret void"),
            Some(v) => {
                out.push_str("ret ");
                print_typed(out, v);
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Instruction, Span};
    use crate::parser::parse;

    #[test]
    fn entry_stub_prints_minimal_module() {
        let text = print(&Program::entry_stub());
        assert_eq!(
            text,
            "define void @main() \"entry_point\" \"num_qubits\"=\"0\" {\nentry:\n  ret void\n}\n"
        );
        assert_eq!(parse(&text).unwrap(), Program::entry_stub());
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = std::f64::consts::FRAC_PI_2;
        let s = format_float(x);
        let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
        assert!(digits >= 17, "{s}");
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn cp_gate_round_trips_exactly() {
        let mut p = Program::entry_stub();
        p.opaque_types.push("Qubit".into());
        let theta = std::f64::consts::PI / 3.0;
        let blocks = p.functions[0].blocks.as_mut().unwrap();
        blocks[0].instructions.insert(
            0,
            Instruction {
                result: None,
                op: Instruction::call(
                    "__quantum__qis__cp__body",
                    Type::Void,
                    vec![
                        TypedOperand::new(Type::Double, Operand::Float(theta)),
                        TypedOperand::qubit(0),
                        TypedOperand::qubit(1),
                    ],
                ),
                span: Span::default(),
            },
        );
        let text = print(&p);
        let back = parse(&text).unwrap();
        assert_eq!(back, p);
        let Op::Call { args, .. } = &back.functions[0].blocks.as_ref().unwrap()[0].instructions[0].op
        else {
            panic!()
        };
        assert_eq!(args[0].value, Operand::Float(theta));
    }
}
