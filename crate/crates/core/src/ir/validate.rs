//! Static checks over a [`Program`].
//!
//! `validate` never fails; it returns every problem it finds as a
//! [`Diagnostic`]. An empty list means the program can be handed to lowering.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use super::intrinsics::{classify, signature_of, IntrinsicBase, ParamKind, NETQIR_PREFIX};
use super::{
    find_attr, Block, FoldGate, Function, LineCol, Op, Operand, Program, Protocol, QisFn, Span,
    Type, TypedOperand, FOLD_ATTR, NUM_QUBITS_ATTR, QIS_PREFIX,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Lex,
    Syntax,
    EntryMissing,
    EntryMultiple,
    DuplicateDefinition,
    UndeclaredType,
    UndefinedSymbol,
    UnknownIntrinsic,
    UnknownExternal,
    SignatureMismatch,
    Arity,
    OperandType,
    SsaRedefined,
    SsaUndefined,
    DuplicateLabel,
    UndefinedLabel,
    MissingTerminator,
    EmptyFunction,
    BadAttribute,
    InitOrder,
    FinalizeMissing,
    CommAfterFinalize,
    UseAfterSend,
    SlotRange,
    RankList,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::Lex => "lex",
            Rule::Syntax => "syntax",
            Rule::EntryMissing => "entry-missing",
            Rule::EntryMultiple => "entry-multiple",
            Rule::DuplicateDefinition => "duplicate-definition",
            Rule::UndeclaredType => "undeclared-type",
            Rule::UndefinedSymbol => "undefined-symbol",
            Rule::UnknownIntrinsic => "unknown-intrinsic",
            Rule::UnknownExternal => "unknown-external",
            Rule::SignatureMismatch => "signature-mismatch",
            Rule::Arity => "arity",
            Rule::OperandType => "operand-type",
            Rule::SsaRedefined => "ssa-redefined",
            Rule::SsaUndefined => "ssa-undefined",
            Rule::DuplicateLabel => "duplicate-label",
            Rule::UndefinedLabel => "undefined-label",
            Rule::MissingTerminator => "missing-terminator",
            Rule::EmptyFunction => "empty-function",
            Rule::BadAttribute => "bad-attribute",
            Rule::InitOrder => "init-order",
            Rule::FinalizeMissing => "finalize-missing",
            Rule::CommAfterFinalize => "comm-after-finalize",
            Rule::UseAfterSend => "use-after-send",
            Rule::SlotRange => "slot-range",
            Rule::RankList => "rank-list",
        }
    }

    /// Ordering rules are reported by the control-flow walk over the entry.
    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            Rule::InitOrder | Rule::FinalizeMissing | Rule::CommAfterFinalize
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub function: Option<String>,
    pub block: Option<String>,
    pub pos: Option<LineCol>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        if let Some(p) = self.pos {
            write!(f, "{p}")?;
            wrote = true;
        }
        if let Some(func) = &self.function {
            if wrote {
                f.write_str(" ")?;
            }
            write!(f, "@{func}")?;
            if let Some(b) = &self.block {
                write!(f, "/{b}")?;
            }
            wrote = true;
        }
        if !wrote {
            f.write_str("<module>")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}[{}]: {}", self.location, self.rule, self.message)
    }
}

struct Sink {
    out: Vec<Diagnostic>,
}

impl Sink {
    fn error(&mut self, rule: Rule, location: Location, message: impl Into<String>) {
        self.out.push(Diagnostic {
            rule,
            severity: Severity::Error,
            location,
            message: message.into(),
        });
    }
}

fn loc(func: &Function, block: Option<&Block>, span: Span) -> Location {
    Location {
        function: Some(func.name.clone()),
        block: block.map(|b| b.label.clone()),
        pos: span.0.or(func.span.0),
    }
}

pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut sink = Sink { out: Vec::new() };
    check_module(program, &mut sink);
    for f in &program.functions {
        match &f.blocks {
            None => check_declaration(program, f, &mut sink),
            Some(blocks) => check_definition(program, f, blocks, &mut sink),
        }
    }
    if let Some(entry) = program.entry() {
        check_entry(program, entry, &mut sink);
    }
    sink.out
}

fn check_module(program: &Program, sink: &mut Sink) {
    let mut seen = HashSet::new();
    for f in &program.functions {
        if !seen.insert(f.name.as_str()) {
            sink.error(
                Rule::DuplicateDefinition,
                loc(f, None, f.span),
                format!("function `@{}` defined more than once", f.name),
            );
        }
    }
    let mut types = HashSet::new();
    for t in &program.opaque_types {
        if !types.insert(t.as_str()) {
            sink.error(
                Rule::DuplicateDefinition,
                Location::default(),
                format!("type `%{t}` declared more than once"),
            );
        }
    }

    let entries: Vec<&Function> = program
        .functions
        .iter()
        .filter(|f| f.is_entry() && !f.is_declaration())
        .collect();
    match entries.len() {
        0 => sink.error(
            Rule::EntryMissing,
            Location::default(),
            "no function carries the \"entry_point\" attribute",
        ),
        1 => {}
        _ => {
            for f in &entries[1..] {
                sink.error(
                    Rule::EntryMultiple,
                    loc(f, None, f.span),
                    format!("second entry point `@{}`", f.name),
                );
            }
        }
    }

    for f in &program.functions {
        let mut names = Vec::new();
        f.ret.opaque_names(&mut names);
        for p in &f.params {
            p.ty.opaque_names(&mut names);
        }
        for b in f.blocks.iter().flatten() {
            for inst in &b.instructions {
                match &inst.op {
                    Op::Call { ret, args, .. } => {
                        ret.opaque_names(&mut names);
                        for a in args {
                            a.ty.opaque_names(&mut names);
                        }
                    }
                    Op::Icmp { ty, .. } | Op::Binary { ty, .. } => ty.opaque_names(&mut names),
                    Op::Ret { value: Some(v) } => v.ty.opaque_names(&mut names),
                    _ => {}
                }
            }
        }
        let mut reported = HashSet::new();
        for n in names {
            if !types.contains(n.as_str()) && reported.insert(n.clone()) {
                sink.error(
                    Rule::UndeclaredType,
                    loc(f, None, f.span),
                    format!("type `%{n}` used but not declared"),
                );
            }
        }
    }
}

fn check_declaration(_program: &Program, f: &Function, sink: &mut Sink) {
    let params: Vec<Type> = f.params.iter().map(|p| p.ty.clone()).collect();
    if f.name.starts_with(NETQIR_PREFIX) {
        match signature_of(&f.name) {
            Err(e) => sink.error(Rule::UnknownIntrinsic, loc(f, None, f.span), e.to_string()),
            Ok(sig) => {
                let params_ok = params.len() == sig.params.len()
                    && sig.params.iter().zip(&params).all(|(k, t)| k.accepts(t));
                if !params_ok || f.ret != sig.ret.ty() {
                    sink.error(
                        Rule::SignatureMismatch,
                        loc(f, None, f.span),
                        format!(
                            "`@{}` declared as {} ({}), expected {} ({})",
                            f.name,
                            f.ret,
                            join_types(&params),
                            sig.ret.ty(),
                            join_types(&sig.param_types())
                        ),
                    );
                }
            }
        }
    } else if f.name.starts_with(QIS_PREFIX) {
        match QisFn::from_name(&f.name) {
            None => sink.error(
                Rule::UnknownIntrinsic,
                loc(f, None, f.span),
                format!("`@{}` is not in the supported gate set", f.name),
            ),
            Some(q) => {
                if params != q.params() || f.ret != q.ret() {
                    sink.error(
                        Rule::SignatureMismatch,
                        loc(f, None, f.span),
                        format!(
                            "`@{}` declared as {} ({}), expected {} ({})",
                            f.name,
                            f.ret,
                            join_types(&params),
                            q.ret(),
                            join_types(&q.params())
                        ),
                    );
                }
            }
        }
    } else {
        sink.error(
            Rule::UnknownExternal,
            loc(f, None, f.span),
            format!("external function `@{}` has no known semantics", f.name),
        );
    }
}

fn join_types(ts: &[Type]) -> String {
    ts.iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// What a call site expects of its callee.
enum Callee<'a> {
    Intrinsic(super::Signature, super::IntrinsicClassification),
    Qis(QisFn),
    User(&'a Function),
}

fn resolve_callee<'a>(program: &'a Program, name: &str) -> Result<Callee<'a>, (Rule, String)> {
    let declared = program.function(name);
    if name.starts_with(NETQIR_PREFIX) {
        let class = classify(name).map_err(|e| (Rule::UnknownIntrinsic, e.to_string()))?;
        if declared.is_none() {
            return Err((Rule::UndefinedSymbol, format!("`@{name}` is called but not declared")));
        }
        let sig = signature_of(name).map_err(|e| (Rule::UnknownIntrinsic, e.to_string()))?;
        return Ok(Callee::Intrinsic(sig, class));
    }
    if name.starts_with(QIS_PREFIX) {
        let q = QisFn::from_name(name).ok_or_else(|| {
            (
                Rule::UnknownIntrinsic,
                format!("`@{name}` is not in the supported gate set"),
            )
        })?;
        if declared.is_none() {
            return Err((Rule::UndefinedSymbol, format!("`@{name}` is called but not declared")));
        }
        return Ok(Callee::Qis(q));
    }
    match declared {
        Some(f) => Ok(Callee::User(f)),
        None => Err((Rule::UndefinedSymbol, format!("`@{name}` is not defined"))),
    }
}

fn constant_fits(value: &Operand, ty: &Type) -> bool {
    match value {
        Operand::Local(_) => true,
        Operand::Int(_) => matches!(ty, Type::Int(w) if *w > 1),
        Operand::Bool(_) => *ty == Type::i1(),
        Operand::Float(_) => *ty == Type::Double,
        Operand::Null => ty.is_pointer(),
        Operand::IntToPtr { ty: inner, .. } => inner == ty,
        Operand::IntList(items) => {
            matches!(ty, Type::Array(n, e) if **e == Type::i32() && *n as usize == items.len())
        }
    }
}

fn check_definition(program: &Program, f: &Function, blocks: &[Block], sink: &mut Sink) {
    if blocks.is_empty() {
        sink.error(Rule::EmptyFunction, loc(f, None, f.span), "function has no blocks");
        return;
    }

    let mut labels = HashSet::new();
    for b in blocks {
        if !labels.insert(b.label.as_str()) {
            sink.error(
                Rule::DuplicateLabel,
                loc(f, Some(b), f.span),
                format!("label `{}` defined twice", b.label),
            );
        }
    }

    // Types of every named value, and redefinition checks.
    let mut types: HashMap<&str, Type> = HashMap::new();
    for p in &f.params {
        if let Some(n) = &p.name {
            if types.insert(n, p.ty.clone()).is_some() {
                sink.error(
                    Rule::SsaRedefined,
                    loc(f, None, f.span),
                    format!("parameter `%{n}` defined twice"),
                );
            }
        }
    }
    for b in blocks {
        for inst in &b.instructions {
            let Some(name) = &inst.result else { continue };
            let ty = match &inst.op {
                Op::Call { ret, .. } => ret.clone(),
                Op::Icmp { .. } => Type::i1(),
                Op::Binary { ty, .. } => ty.clone(),
                _ => Type::Void,
            };
            if types.insert(name, ty).is_some() {
                sink.error(
                    Rule::SsaRedefined,
                    loc(f, Some(b), inst.span),
                    format!("value `%{name}` defined more than once"),
                );
            }
        }
    }

    for b in blocks {
        match b.instructions.last() {
            Some(last) if last.op.is_terminator() => {}
            _ => sink.error(
                Rule::MissingTerminator,
                loc(f, Some(b), b.instructions.last().map(|i| i.span).unwrap_or_default()),
                format!("block `{}` does not end with a terminator", b.label),
            ),
        }
        let n = b.instructions.len();
        for (i, inst) in b.instructions.iter().enumerate() {
            if inst.op.is_terminator() && i + 1 != n {
                sink.error(
                    Rule::MissingTerminator,
                    loc(f, Some(b), inst.span),
                    "terminator in the middle of a block",
                );
            }
            for target in inst.op.successors() {
                if !labels.contains(target) {
                    sink.error(
                        Rule::UndefinedLabel,
                        loc(f, Some(b), inst.span),
                        format!("branch to undefined label `{target}`"),
                    );
                }
            }
            check_instruction(program, f, b, inst, &types, sink);
        }
    }

    check_dominance(f, blocks, sink);
}

fn operand_type_error(
    f: &Function,
    b: &Block,
    span: Span,
    what: &str,
    value: &Operand,
    ty: &Type,
    types: &HashMap<&str, Type>,
    sink: &mut Sink,
) {
    match value {
        Operand::Local(n) => {
            if let Some(actual) = types.get(n.as_str()) {
                if actual != ty {
                    sink.error(
                        Rule::OperandType,
                        loc(f, Some(b), span),
                        format!("{what}: `%{n}` has type {actual}, used as {ty}"),
                    );
                }
            }
        }
        c => {
            if !constant_fits(c, ty) {
                sink.error(
                    Rule::OperandType,
                    loc(f, Some(b), span),
                    format!("{what}: constant does not fit type {ty}"),
                );
            }
        }
    }
}

fn check_instruction(
    program: &Program,
    f: &Function,
    b: &Block,
    inst: &super::Instruction,
    types: &HashMap<&str, Type>,
    sink: &mut Sink,
) {
    let span = inst.span;
    match &inst.op {
        Op::Call {
            callee,
            ret,
            args,
            attrs,
        } => {
            for a in args {
                operand_type_error(f, b, span, "argument", &a.value, &a.ty, types, sink);
            }
            if inst.result.is_some() && *ret == Type::Void {
                sink.error(
                    Rule::OperandType,
                    loc(f, Some(b), span),
                    "void call cannot produce a value",
                );
            }
            let callee_info = match resolve_callee(program, callee) {
                Ok(c) => c,
                Err((rule, msg)) => {
                    sink.error(rule, loc(f, Some(b), span), msg);
                    return;
                }
            };
            let (expected_ret, param_check): (Type, Vec<Box<dyn Fn(&TypedOperand) -> bool>>) =
                match &callee_info {
                    Callee::Intrinsic(sig, _) => (
                        sig.ret.ty(),
                        sig.params
                            .iter()
                            .map(|&k| {
                                Box::new(move |a: &TypedOperand| k.accepts(&a.ty))
                                    as Box<dyn Fn(&TypedOperand) -> bool>
                            })
                            .collect(),
                    ),
                    Callee::Qis(q) => (
                        q.ret(),
                        q.params()
                            .into_iter()
                            .map(|t| {
                                Box::new(move |a: &TypedOperand| a.ty == t)
                                    as Box<dyn Fn(&TypedOperand) -> bool>
                            })
                            .collect(),
                    ),
                    Callee::User(uf) => (
                        uf.ret.clone(),
                        uf.params
                            .iter()
                            .map(|p| {
                                let t = p.ty.clone();
                                Box::new(move |a: &TypedOperand| a.ty == t)
                                    as Box<dyn Fn(&TypedOperand) -> bool>
                            })
                            .collect(),
                    ),
                };
            if args.len() != param_check.len() {
                sink.error(
                    Rule::Arity,
                    loc(f, Some(b), span),
                    format!(
                        "`@{callee}` takes {} argument(s), got {}",
                        param_check.len(),
                        args.len()
                    ),
                );
            } else {
                for (i, (a, ok)) in args.iter().zip(&param_check).enumerate() {
                    if !ok(a) {
                        let expected = match &callee_info {
                            Callee::Intrinsic(sig, _) => {
                                format!("{} ({})", sig.params[i].ty(), sig.params[i])
                            }
                            Callee::Qis(q) => q.params()[i].to_string(),
                            Callee::User(uf) => uf.params[i].ty.to_string(),
                        };
                        sink.error(
                            Rule::OperandType,
                            loc(f, Some(b), span),
                            format!(
                                "argument {} of `@{callee}` has type {}, expected {expected}",
                                i + 1,
                                a.ty
                            ),
                        );
                    }
                }
            }
            if *ret != expected_ret {
                sink.error(
                    Rule::SignatureMismatch,
                    loc(f, Some(b), span),
                    format!("`@{callee}` returns {expected_ret}, call site says {ret}"),
                );
            }
            if let Callee::Intrinsic(sig, class) = &callee_info {
                if args.len() == sig.params.len() {
                    check_intrinsic_args(program, f, b, span, sig, args, sink);
                }
                for a in attrs {
                    if a.key == FOLD_ATTR {
                        let valid = a.value.as_deref().and_then(FoldGate::parse).is_some();
                        if class.base != IntrinsicBase::Reduce {
                            sink.error(
                                Rule::BadAttribute,
                                loc(f, Some(b), span),
                                format!("`{FOLD_ATTR}` only applies to reduce"),
                            );
                        } else if !valid {
                            sink.error(
                                Rule::BadAttribute,
                                loc(f, Some(b), span),
                                format!(
                                    "`{FOLD_ATTR}` must be \"cnot\" or \"cz\", got {:?}",
                                    a.value
                                ),
                            );
                        }
                    }
                }
            }
        }
        Op::Icmp { ty, lhs, rhs, .. } | Op::Binary { ty, lhs, rhs, .. } => {
            if !matches!(ty, Type::Int(_)) {
                sink.error(
                    Rule::OperandType,
                    loc(f, Some(b), span),
                    format!("integer operation on type {ty}"),
                );
            }
            operand_type_error(f, b, span, "left operand", lhs, ty, types, sink);
            operand_type_error(f, b, span, "right operand", rhs, ty, types, sink);
        }
        Op::CondBr { cond, .. } => {
            operand_type_error(f, b, span, "branch condition", cond, &Type::i1(), types, sink);
        }
        Op::Ret { value } => {
            let ret_ty = value.as_ref().map(|v| v.ty.clone()).unwrap_or(Type::Void);
            if ret_ty != f.ret {
                sink.error(
                    Rule::OperandType,
                    loc(f, Some(b), span),
                    format!("function returns {}, ret has {ret_ty}", f.ret),
                );
            }
            if let Some(v) = value {
                operand_type_error(f, b, span, "return value", &v.value, &v.ty, types, sink);
            }
        }
        Op::Br { .. } => {}
    }
}

fn check_intrinsic_args(
    program: &Program,
    f: &Function,
    b: &Block,
    span: Span,
    sig: &super::Signature,
    args: &[TypedOperand],
    sink: &mut Sink,
) {
    let entry_slots = program.entry().and_then(|e| e.num_qubits());
    for (i, (kind, a)) in sig.params.iter().zip(args).enumerate() {
        match kind {
            ParamKind::RankList => match &a.value {
                Operand::IntList(items) => {
                    if items.is_empty() {
                        sink.error(Rule::RankList, loc(f, Some(b), span), "empty rank list");
                    }
                    let mut seen = BTreeSet::new();
                    for r in items {
                        if *r < 0 {
                            sink.error(
                                Rule::RankList,
                                loc(f, Some(b), span),
                                format!("negative rank {r} in rank list"),
                            );
                        } else if !seen.insert(*r) {
                            sink.error(
                                Rule::RankList,
                                loc(f, Some(b), span),
                                format!("rank {r} listed twice"),
                            );
                        }
                    }
                }
                _ => sink.error(
                    Rule::RankList,
                    loc(f, Some(b), span),
                    "rank list must be a constant aggregate",
                ),
            },
            ParamKind::Count => {
                if let Operand::Int(c) = a.value {
                    if c < 0 {
                        sink.error(
                            Rule::OperandType,
                            loc(f, Some(b), span),
                            format!("negative count {c}"),
                        );
                    }
                }
            }
            ParamKind::Array | ParamKind::ArrayOut => {
                if let (Some(limit), Some(base)) = (entry_slots, a.value.as_slot()) {
                    let count = match args.get(i + 1).map(|c| &c.value) {
                        Some(Operand::Int(c)) => *c,
                        _ => 0,
                    };
                    if base < 0 || base + count > i64::from(limit) {
                        sink.error(
                            Rule::SlotRange,
                            loc(f, Some(b), span),
                            format!(
                                "array slots {base}..{} exceed the {limit} declared qubits",
                                base + count
                            ),
                        );
                    }
                }
            }
            _ => {}
        }
    }
}

/// Every use must be preceded by its definition on all paths from entry.
fn check_dominance(f: &Function, blocks: &[Block], sink: &mut Sink) {
    let index: HashMap<&str, usize> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();
    let all_defined: HashSet<&str> = blocks
        .iter()
        .flat_map(|b| b.instructions.iter().filter_map(|i| i.result.as_deref()))
        .chain(f.params.iter().filter_map(|p| p.name.as_deref()))
        .collect();
    let params: BTreeSet<&str> = f.params.iter().filter_map(|p| p.name.as_deref()).collect();

    let mut in_sets: Vec<Option<BTreeSet<&str>>> = vec![None; blocks.len()];
    in_sets[0] = Some(params);
    let mut work: VecDeque<usize> = VecDeque::from([0]);
    while let Some(i) = work.pop_front() {
        let mut set = in_sets[i].clone().unwrap_or_default();
        for inst in &blocks[i].instructions {
            if let Some(r) = &inst.result {
                set.insert(r);
            }
        }
        if let Some(last) = blocks[i].instructions.last() {
            for s in last.op.successors() {
                let Some(&j) = index.get(s) else { continue };
                let next = match &in_sets[j] {
                    None => set.clone(),
                    Some(prev) => prev.intersection(&set).copied().collect(),
                };
                if in_sets[j].as_ref() != Some(&next) {
                    in_sets[j] = Some(next);
                    work.push_back(j);
                }
            }
        }
    }

    for (i, b) in blocks.iter().enumerate() {
        let Some(mut set) = in_sets[i].clone() else { continue };
        for inst in &b.instructions {
            for op in inst.op.operands() {
                if let Operand::Local(n) = op {
                    if !set.contains(n.as_str()) {
                        let msg = if all_defined.contains(n.as_str()) {
                            format!("`%{n}` is not defined on every path to this use")
                        } else {
                            format!("use of undefined value `%{n}`")
                        };
                        sink.error(Rule::SsaUndefined, loc(f, Some(b), inst.span), msg);
                    }
                }
            }
            if let Some(r) = &inst.result {
                set.insert(r);
            }
        }
    }
}

/// Flow facts tracked through the entry function.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Facts {
    /// Initialize has run on every path.
    init: bool,
    /// Finalize has run on every path.
    fin_must: bool,
    /// Finalize has run on some path.
    fin_may: bool,
    /// Qubit slots given away by a teledata send on every path.
    consumed: BTreeSet<i64>,
}

impl Facts {
    fn meet(&self, other: &Facts) -> Facts {
        Facts {
            init: self.init && other.init,
            fin_must: self.fin_must && other.fin_must,
            fin_may: self.fin_may || other.fin_may,
            consumed: self.consumed.intersection(&other.consumed).copied().collect(),
        }
    }
}

/// Functions that transitively call communication intrinsics.
fn communicating_functions(program: &Program) -> HashSet<&str> {
    let mut set: HashSet<&str> = HashSet::new();
    loop {
        let mut changed = false;
        for f in &program.functions {
            if set.contains(f.name.as_str()) {
                continue;
            }
            let uses = f.blocks.iter().flatten().any(|b| {
                b.instructions.iter().any(|i| match &i.op {
                    Op::Call { callee, .. } => {
                        callee.starts_with(NETQIR_PREFIX) || set.contains(callee.as_str())
                    }
                    _ => false,
                })
            });
            if uses {
                set.insert(&f.name);
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}

fn check_entry(program: &Program, entry: &Function, sink: &mut Sink) {
    let num_qubits = match find_attr(&entry.attrs, NUM_QUBITS_ATTR) {
        None => {
            sink.error(
                Rule::BadAttribute,
                loc(entry, None, entry.span),
                format!("entry point lacks \"{NUM_QUBITS_ATTR}\""),
            );
            None
        }
        Some(a) => match a.value.as_deref().and_then(|v| v.parse::<u32>().ok()) {
            Some(n) => Some(n),
            None => {
                sink.error(
                    Rule::BadAttribute,
                    loc(entry, None, entry.span),
                    format!("\"{NUM_QUBITS_ATTR}\" must be a non-negative integer"),
                );
                None
            }
        },
    };
    if !entry.params.is_empty() || entry.ret != Type::Void {
        sink.error(
            Rule::SignatureMismatch,
            loc(entry, None, entry.span),
            "entry point must take no parameters and return void",
        );
    }

    if let Some(limit) = num_qubits {
        for f in &program.functions {
            for b in f.blocks.iter().flatten() {
                for inst in &b.instructions {
                    let Op::Call { args, .. } = &inst.op else { continue };
                    for a in args {
                        let is_qubit = a.ty == Type::qubit() || a.ty == Type::qubit_out();
                        if let (true, Some(slot)) = (is_qubit, a.value.as_slot()) {
                            if slot < 0 || slot >= i64::from(limit) {
                                sink.error(
                                    Rule::SlotRange,
                                    loc(f, Some(b), inst.span),
                                    format!(
                                        "qubit slot {slot} outside the {limit} declared qubits"
                                    ),
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    let Some(blocks) = &entry.blocks else { return };
    if blocks.is_empty() {
        return;
    }
    let comm_fns = communicating_functions(program);
    let index: HashMap<&str, usize> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label.as_str(), i))
        .collect();

    let start = Facts {
        init: false,
        fin_must: false,
        fin_may: false,
        consumed: BTreeSet::new(),
    };
    let mut in_facts: Vec<Option<Facts>> = vec![None; blocks.len()];
    in_facts[0] = Some(start);
    let mut work = VecDeque::from([0usize]);
    while let Some(i) = work.pop_front() {
        let mut facts = in_facts[i].clone().expect("queued blocks have facts");
        for inst in &blocks[i].instructions {
            transfer(&mut facts, inst, &comm_fns, None);
        }
        if let Some(last) = blocks[i].instructions.last() {
            for s in last.op.successors() {
                let Some(&j) = index.get(s) else { continue };
                let next = match &in_facts[j] {
                    None => facts.clone(),
                    Some(prev) => prev.meet(&facts),
                };
                if in_facts[j].as_ref() != Some(&next) {
                    in_facts[j] = Some(next);
                    work.push_back(j);
                }
            }
        }
    }

    for (i, b) in blocks.iter().enumerate() {
        let Some(mut facts) = in_facts[i].clone() else { continue };
        for inst in &b.instructions {
            let mut report = |rule: Rule, msg: String| {
                sink.error(rule, loc(entry, Some(b), inst.span), msg);
            };
            transfer(&mut facts, inst, &comm_fns, Some(&mut report));
        }
    }
}

type Reporter<'a> = &'a mut dyn FnMut(Rule, String);

fn qubit_slots(args: &[TypedOperand]) -> Vec<i64> {
    let mut out = Vec::new();
    for (i, a) in args.iter().enumerate() {
        let Some(slot) = a.value.as_slot() else { continue };
        if a.ty == Type::qubit() {
            out.push(slot);
        } else if a.ty == Type::array() {
            if let Some(Operand::Int(c)) = args.get(i + 1).map(|c| &c.value) {
                out.extend(slot..slot + c);
            }
        }
    }
    out
}

fn transfer(
    facts: &mut Facts,
    inst: &super::Instruction,
    comm_fns: &HashSet<&str>,
    mut report: Option<Reporter<'_>>,
) {
    let mut emit = |rule: Rule, msg: String| {
        if let Some(r) = report.as_mut() {
            r(rule, msg);
        }
    };
    match &inst.op {
        Op::Call { callee, args, .. } => {
            let class = classify(callee).ok();
            let base = class.map(|c| c.base);
            match base {
                Some(IntrinsicBase::Initialize) => {
                    if facts.init {
                        emit(Rule::InitOrder, "initialize called twice".into());
                    }
                    facts.init = true;
                    return;
                }
                Some(IntrinsicBase::Finalize) => {
                    if !facts.init {
                        emit(Rule::InitOrder, "finalize before initialize".into());
                    }
                    if facts.fin_may {
                        emit(Rule::CommAfterFinalize, "finalize called twice".into());
                    }
                    facts.fin_must = true;
                    facts.fin_may = true;
                    return;
                }
                _ => {}
            }
            let is_comm = callee.starts_with(NETQIR_PREFIX) || comm_fns.contains(callee.as_str());
            if is_comm {
                if !facts.init {
                    emit(
                        Rule::InitOrder,
                        format!("`@{callee}` may run before __netqir__initialize"),
                    );
                }
                if facts.fin_may {
                    emit(
                        Rule::CommAfterFinalize,
                        format!("`@{callee}` may run after __netqir__finalize"),
                    );
                }
            }

            for slot in qubit_slots(args) {
                if facts.consumed.contains(&slot) && QisFn::from_name(callee) != Some(QisFn::Reset)
                {
                    emit(
                        Rule::UseAfterSend,
                        format!("qubit slot {slot} used after being sent by teledata"),
                    );
                }
            }
            if QisFn::from_name(callee) == Some(QisFn::Reset) {
                for slot in qubit_slots(args) {
                    facts.consumed.remove(&slot);
                }
            }
            if let Some(c) = class {
                if c.base == IntrinsicBase::Qrecv {
                    if let Some(slot) = args.first().and_then(|a| a.value.as_slot()) {
                        let count = match args.get(1).map(|a| &a.value) {
                            Some(Operand::Int(n)) if c.array => *n,
                            _ => 1,
                        };
                        for s in slot..slot + count {
                            facts.consumed.remove(&s);
                        }
                    }
                }
                if c.base == IntrinsicBase::Qsend && c.protocol == Protocol::Teledata {
                    facts.consumed.extend(qubit_slots(args));
                }
            }
        }
        Op::Ret { .. } => {
            if !facts.fin_must {
                emit(
                    Rule::FinalizeMissing,
                    "return reachable without __netqir__finalize".into(),
                );
            }
        }
        _ => {}
    }
}

/// Diagnostics grouped by rule id, for quick assertions in tests and the CLI.
pub fn rule_counts(diags: &[Diagnostic]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for d in diags {
        *m.entry(d.rule.id()).or_insert(0) += 1;
    }
    m
}
