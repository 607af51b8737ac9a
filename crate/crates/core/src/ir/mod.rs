//! In-memory representation of NetQIR modules.
//!
//! A [`Program`] is an LLVM-style module: opaque type declarations, function
//! declarations and definitions made of labelled basic blocks. Quantum
//! operations are calls to the fixed `__quantum__qis__*` gate set and
//! distribution is expressed through calls to the `__netqir__*` intrinsics
//! described in [`intrinsics`].

pub mod comm;
pub mod intrinsics;
pub mod validate;

use std::fmt;

pub use comm::{comm_from_group, group_from_ranks, CommError, CommHandle, GroupHandle, Rank};
pub use intrinsics::{
    classify, signature_of, IntrinsicBase, IntrinsicClassification, ParamKind, RetKind, Signature,
    UnknownIntrinsic,
};
pub use validate::{validate, Diagnostic, Location, Rule, Severity};

/// Attribute marking the entry function.
pub const ENTRY_POINT_ATTR: &str = "entry_point";
/// Attribute carrying the number of statically declared qubit slots per rank.
pub const NUM_QUBITS_ATTR: &str = "num_qubits";
/// Call-site attribute selecting the combining gate of a quantum reduce.
pub const FOLD_ATTR: &str = "netqir.fold";

/// Line/column of a token in source text (both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineCol {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for LineCol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Optional source position attached to IR nodes.
///
/// Positions never take part in structural equality: two programs that only
/// differ in where they were parsed from compare equal.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span(pub Option<LineCol>);

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl Span {
    pub fn at(line: u32, col: u32) -> Self {
        Span(Some(LineCol { line, col }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Void,
    /// Integer of the given bit width (`i1`, `i32`, `i64`).
    Int(u32),
    Double,
    /// Reference to a declared opaque type such as `%Qubit`.
    Named(String),
    Ptr(Box<Type>),
    /// Fixed-length aggregate `[N x T]`.
    Array(u64, Box<Type>),
}

impl Type {
    pub fn named(name: &str) -> Type {
        Type::Named(name.to_string())
    }

    pub fn ptr(self) -> Type {
        Type::Ptr(Box::new(self))
    }

    pub fn qubit() -> Type {
        Type::named("Qubit").ptr()
    }

    pub fn qubit_out() -> Type {
        Type::qubit().ptr()
    }

    pub fn array() -> Type {
        Type::named("Array").ptr()
    }

    pub fn array_out() -> Type {
        Type::array().ptr()
    }

    pub fn result() -> Type {
        Type::named("Result").ptr()
    }

    pub fn comm() -> Type {
        Type::named("Comm").ptr()
    }

    pub fn group() -> Type {
        Type::named("Group").ptr()
    }

    pub fn i1() -> Type {
        Type::Int(1)
    }

    pub fn i32() -> Type {
        Type::Int(32)
    }

    pub fn i64() -> Type {
        Type::Int(64)
    }

    pub fn rank_list(len: u64) -> Type {
        Type::Array(len, Box::new(Type::i32()))
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, Type::Ptr(_))
    }

    /// Names of opaque types referenced anywhere inside this type.
    pub fn opaque_names(&self, out: &mut Vec<String>) {
        match self {
            Type::Named(n) => out.push(n.clone()),
            Type::Ptr(t) | Type::Array(_, t) => t.opaque_names(out),
            Type::Void | Type::Int(_) | Type::Double => {}
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Void => f.write_str("void"),
            Type::Int(w) => write!(f, "i{w}"),
            Type::Double => f.write_str("double"),
            Type::Named(n) => write!(f, "%{n}"),
            Type::Ptr(t) => write!(f, "{t}*"),
            Type::Array(n, t) => write!(f, "[{n} x {t}]"),
        }
    }
}

/// Operand of an instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Local(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
    /// `inttoptr (i64 value to ty)`: a static qubit, array or result slot.
    IntToPtr { value: i64, ty: Type },
    /// Constant aggregate of integers, e.g. `[i32 0, i32 2]`.
    IntList(Vec<i64>),
}

impl Operand {
    pub fn local(name: &str) -> Operand {
        Operand::Local(name.to_string())
    }

    /// Static slot constant pointing into the per-rank register of type `ty`.
    pub fn slot(index: u32, ty: Type) -> Operand {
        Operand::IntToPtr {
            value: i64::from(index),
            ty,
        }
    }

    /// The slot index named by a pointer constant (`null` is slot 0).
    pub fn as_slot(&self) -> Option<i64> {
        match self {
            Operand::Null => Some(0),
            Operand::IntToPtr { value, .. } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedOperand {
    pub ty: Type,
    pub value: Operand,
}

impl TypedOperand {
    pub fn new(ty: Type, value: Operand) -> Self {
        TypedOperand { ty, value }
    }

    pub fn i32(v: i64) -> Self {
        TypedOperand::new(Type::i32(), Operand::Int(v))
    }

    pub fn qubit(slot: u32) -> Self {
        TypedOperand::new(Type::qubit(), Operand::slot(slot, Type::qubit()))
    }
}

/// `"key"` or `"key"="value"` string attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attr {
    pub key: String,
    pub value: Option<String>,
}

impl Attr {
    pub fn flag(key: &str) -> Attr {
        Attr {
            key: key.to_string(),
            value: None,
        }
    }

    pub fn kv(key: &str, value: impl Into<String>) -> Attr {
        Attr {
            key: key.to_string(),
            value: Some(value.into()),
        }
    }
}

pub fn find_attr<'a>(attrs: &'a [Attr], key: &str) -> Option<&'a Attr> {
    attrs.iter().find(|a| a.key == key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IcmpPred {
    Eq,
    Ne,
    Slt,
}

impl IcmpPred {
    pub fn keyword(self) -> &'static str {
        match self {
            IcmpPred::Eq => "eq",
            IcmpPred::Ne => "ne",
            IcmpPred::Slt => "slt",
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            IcmpPred::Eq => a == b,
            IcmpPred::Ne => a != b,
            IcmpPred::Slt => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
}

impl BinOp {
    pub fn keyword(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Call {
        callee: String,
        ret: Type,
        args: Vec<TypedOperand>,
        attrs: Vec<Attr>,
    },
    Icmp {
        pred: IcmpPred,
        ty: Type,
        lhs: Operand,
        rhs: Operand,
    },
    Binary {
        op: BinOp,
        ty: Type,
        lhs: Operand,
        rhs: Operand,
    },
    Br {
        dest: String,
    },
    CondBr {
        cond: Operand,
        then_dest: String,
        else_dest: String,
    },
    Ret {
        value: Option<TypedOperand>,
    },
}

impl Op {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br { .. } | Op::CondBr { .. } | Op::Ret { .. })
    }

    /// Successor labels of a terminator.
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Op::Br { dest } => vec![dest.as_str()],
            Op::CondBr {
                then_dest,
                else_dest,
                ..
            } => vec![then_dest.as_str(), else_dest.as_str()],
            _ => Vec::new(),
        }
    }

    /// Every operand read by this operation.
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Op::Call { args, .. } => args.iter().map(|a| &a.value).collect(),
            Op::Icmp { lhs, rhs, .. } | Op::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Op::CondBr { cond, .. } => vec![cond],
            Op::Ret { value } => value.iter().map(|v| &v.value).collect(),
            Op::Br { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub result: Option<String>,
    pub op: Op,
    pub span: Span,
}

impl Instruction {
    pub fn new(op: Op) -> Self {
        Instruction {
            result: None,
            op,
            span: Span::default(),
        }
    }

    pub fn with_result(name: &str, op: Op) -> Self {
        Instruction {
            result: Some(name.to_string()),
            op,
            span: Span::default(),
        }
    }

    pub fn call(callee: &str, ret: Type, args: Vec<TypedOperand>) -> Op {
        Op::Call {
            callee: callee.to_string(),
            ret,
            args,
            attrs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub instructions: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub ty: Type,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    pub attrs: Vec<Attr>,
    /// `None` for declarations.
    pub blocks: Option<Vec<Block>>,
    pub span: Span,
}

impl Function {
    pub fn declaration(name: &str, ret: Type, params: Vec<Type>) -> Self {
        Function {
            name: name.to_string(),
            ret,
            params: params
                .into_iter()
                .map(|ty| Param { ty, name: None })
                .collect(),
            attrs: Vec::new(),
            blocks: None,
            span: Span::default(),
        }
    }

    pub fn is_declaration(&self) -> bool {
        self.blocks.is_none()
    }

    pub fn is_entry(&self) -> bool {
        find_attr(&self.attrs, ENTRY_POINT_ATTR).is_some()
    }

    /// Declared number of qubit slots, when the attribute is present and numeric.
    pub fn num_qubits(&self) -> Option<u32> {
        find_attr(&self.attrs, NUM_QUBITS_ATTR)
            .and_then(|a| a.value.as_deref())
            .and_then(|v| v.parse().ok())
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks
            .as_ref()
            .and_then(|bs| bs.iter().find(|b| b.label == label))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub opaque_types: Vec<String>,
    pub functions: Vec<Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// The unique entry function, if exactly one is marked.
    pub fn entry(&self) -> Option<&Function> {
        let mut entries = self.functions.iter().filter(|f| f.is_entry() && !f.is_declaration());
        match (entries.next(), entries.next()) {
            (Some(f), None) => Some(f),
            _ => None,
        }
    }

    /// Minimal module: a single entry function that immediately returns.
    pub fn entry_stub() -> Program {
        Program {
            opaque_types: Vec::new(),
            functions: vec![Function {
                name: "main".to_string(),
                ret: Type::Void,
                params: Vec::new(),
                attrs: vec![Attr::flag(ENTRY_POINT_ATTR), Attr::kv(NUM_QUBITS_ATTR, "0")],
                blocks: Some(vec![Block {
                    label: "entry".to_string(),
                    instructions: vec![Instruction::new(Op::Ret { value: None })],
                }]),
                span: Span::default(),
            }],
        }
    }

    /// Calls to `__netqir__*` intrinsics across all defined functions.
    pub fn intrinsic_calls(&self) -> Vec<(&str, &Instruction)> {
        let mut out = Vec::new();
        for f in &self.functions {
            for b in f.blocks.iter().flatten() {
                for inst in &b.instructions {
                    if let Op::Call { callee, .. } = &inst.op {
                        if callee.starts_with(intrinsics::NETQIR_PREFIX) {
                            out.push((callee.as_str(), inst));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Gates of the base instruction set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H,
    X,
    Z,
    Cnot,
    Cz,
    /// Controlled phase `diag(1, 1, 1, e^{iθ})`, θ in radians.
    Cp(f64),
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::H | Gate::X | Gate::Z => 1,
            Gate::Cnot | Gate::Cz | Gate::Cp(_) => 2,
        }
    }

    /// Diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        matches!(self, Gate::Z | Gate::Cz | Gate::Cp(_))
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::H => f.write_str("H"),
            Gate::X => f.write_str("X"),
            Gate::Z => f.write_str("Z"),
            Gate::Cnot => f.write_str("CNOT"),
            Gate::Cz => f.write_str("CZ"),
            Gate::Cp(theta) => write!(f, "CP({theta:.17e})"),
        }
    }
}

/// Functions of the fixed `__quantum__qis__` set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QisFn {
    H,
    X,
    Z,
    Cnot,
    Cz,
    Cp,
    Mz,
    Reset,
    ReadResult,
}

pub const QIS_PREFIX: &str = "__quantum__qis__";

impl QisFn {
    pub const ALL: [QisFn; 9] = [
        QisFn::H,
        QisFn::X,
        QisFn::Z,
        QisFn::Cnot,
        QisFn::Cz,
        QisFn::Cp,
        QisFn::Mz,
        QisFn::Reset,
        QisFn::ReadResult,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QisFn::H => "__quantum__qis__h__body",
            QisFn::X => "__quantum__qis__x__body",
            QisFn::Z => "__quantum__qis__z__body",
            QisFn::Cnot => "__quantum__qis__cnot__body",
            QisFn::Cz => "__quantum__qis__cz__body",
            QisFn::Cp => "__quantum__qis__cp__body",
            QisFn::Mz => "__quantum__qis__mz__body",
            QisFn::Reset => "__quantum__qis__reset__body",
            QisFn::ReadResult => "__quantum__qis__read_result__body",
        }
    }

    pub fn from_name(name: &str) -> Option<QisFn> {
        QisFn::ALL.into_iter().find(|q| q.name() == name)
    }

    pub fn params(self) -> Vec<Type> {
        match self {
            QisFn::H | QisFn::X | QisFn::Z | QisFn::Reset => vec![Type::qubit()],
            QisFn::Cnot | QisFn::Cz => vec![Type::qubit(), Type::qubit()],
            QisFn::Cp => vec![Type::Double, Type::qubit(), Type::qubit()],
            QisFn::Mz => vec![Type::qubit(), Type::result()],
            QisFn::ReadResult => vec![Type::result()],
        }
    }

    pub fn ret(self) -> Type {
        match self {
            QisFn::ReadResult => Type::i1(),
            _ => Type::Void,
        }
    }

    pub fn for_gate(gate: &Gate) -> QisFn {
        match gate {
            Gate::H => QisFn::H,
            Gate::X => QisFn::X,
            Gate::Z => QisFn::Z,
            Gate::Cnot => QisFn::Cnot,
            Gate::Cz => QisFn::Cz,
            Gate::Cp(_) => QisFn::Cp,
        }
    }

    pub fn declaration(self) -> Function {
        Function::declaration(self.name(), self.ret(), self.params())
    }
}

/// Combining gate of a quantum reduce: folds each contribution into the accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FoldGate {
    /// Parity accumulation: `CNOT(contribution -> accumulator)`.
    #[default]
    Cnot,
    Cz,
}

impl FoldGate {
    pub fn parse(s: &str) -> Option<FoldGate> {
        match s {
            "cnot" => Some(FoldGate::Cnot),
            "cz" => Some(FoldGate::Cz),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            FoldGate::Cnot => "cnot",
            FoldGate::Cz => "cz",
        }
    }

    pub fn gate(self) -> Gate {
        match self {
            FoldGate::Cnot => Gate::Cnot,
            FoldGate::Cz => Gate::Cz,
        }
    }
}

/// Communication protocol carried by an intrinsic name suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Protocol {
    #[default]
    Unspecified,
    Teledata,
    Telegate,
}

impl Protocol {
    pub fn suffix(self) -> &'static str {
        match self {
            Protocol::Unspecified => "",
            Protocol::Teledata => "_teledata",
            Protocol::Telegate => "_telegate",
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Protocol::Unspecified => "auto",
            Protocol::Teledata => "teledata",
            Protocol::Telegate => "telegate",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_display_matches_llvm_spelling() {
        assert_eq!(Type::qubit_out().to_string(), "%Qubit**");
        assert_eq!(Type::rank_list(3).to_string(), "[3 x i32]");
        assert_eq!(Type::Int(1).ptr().to_string(), "i1*");
    }

    #[test]
    fn spans_do_not_affect_equality() {
        let mut a = Instruction::new(Op::Ret { value: None });
        let b = a.clone();
        a.span = Span::at(3, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn entry_requires_exactly_one_marked_definition() {
        let mut p = Program::entry_stub();
        assert!(p.entry().is_some());
        let mut second = p.functions[0].clone();
        second.name = "other".into();
        p.functions.push(second);
        assert!(p.entry().is_none());
    }

    #[test]
    fn qis_names_round_trip() {
        for q in QisFn::ALL {
            assert_eq!(QisFn::from_name(q.name()), Some(q));
        }
        assert_eq!(QisFn::from_name("__quantum__qis__t__body"), None);
    }
}
