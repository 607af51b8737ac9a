//! Programmatic construction of NetQIR modules.
//!
//! Operations are recorded into a tree of scopes and only turned into IR
//! when an [`Executor`] runs over the tree. [`ProgramExecutor`] yields a
//! [`Program`]; [`PrinterExecutor`] writes canonical text directly.
//!
//! ```
//! use netqir::builder::{Builder, PrinterExecutor};
//! use netqir::ir::Protocol;
//!
//! let mut b = Builder::new(1);
//! let (main, world) = (b.main(), b.world());
//! let send = b.rank_conditional(main, &world, 0);
//! b.qsend(send, 0, 1, &world, Protocol::Unspecified);
//! let recv = b.rank_conditional(main, &world, 1);
//! b.qrecv(recv, 0, 0, &world, Protocol::Unspecified);
//! b.finalize(main);
//! let text = b.emit(&PrinterExecutor).unwrap();
//! assert!(text.contains("@__netqir__qsend("));
//! ```

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::ir::intrinsics::{self, IntrinsicBase, IntrinsicClassification};
use crate::ir::{
    Attr, Block, FoldGate, Function, Gate, IcmpPred, Instruction, Op, Operand, Program, Protocol,
    QisFn, Span, Type, TypedOperand, ENTRY_POINT_ATTR, FOLD_ATTR, NUM_QUBITS_ATTR,
};
use crate::parser::printer::typed_operand_text;
#[cfg(test)]
use crate::parser::print;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScopeId(usize);

/// A communicator value inside the program being built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comm {
    value: String,
    /// SSA name holding this process's rank, when it is known to exist.
    rank: Option<String>,
}

impl Comm {
    pub fn value(&self) -> &str {
        &self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Gate {
        gate: Gate,
        qubits: Vec<u32>,
    },
    Measure {
        qubit: u32,
        result: u32,
    },
    Reset {
        qubit: u32,
    },
    Call {
        result: Option<String>,
        callee: String,
        ret: Type,
        args: Vec<TypedOperand>,
        attrs: Vec<Attr>,
    },
    RankConditional {
        rank_value: String,
        rank: i64,
        then_scope: ScopeId,
        else_scope: Option<ScopeId>,
    },
}

#[derive(Debug, Clone)]
struct Scope {
    #[allow(dead_code)]
    parent: Option<ScopeId>,
    ops: Vec<Operation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BuildError {
    #[error("main scope does not end with __netqir__finalize")]
    UnterminatedProgram,
}

#[derive(Debug, Clone)]
pub struct Builder {
    scopes: Vec<Scope>,
    num_qubits: u32,
    world: Comm,
    next_value: usize,
}

const MAIN: ScopeId = ScopeId(0);

impl Builder {
    /// Start a program with `num_qubits` qubit slots per rank. The main scope
    /// begins with initialize and the world communicator queries.
    pub fn new(num_qubits: u32) -> Builder {
        let world = Comm {
            value: "world".into(),
            rank: Some("rank".into()),
        };
        let mut b = Builder {
            scopes: vec![Scope {
                parent: None,
                ops: Vec::new(),
            }],
            num_qubits,
            world: world.clone(),
            next_value: 0,
        };
        b.intrinsic(MAIN, None, IntrinsicBase::Initialize, false, Protocol::Unspecified, vec![]);
        b.intrinsic(
            MAIN,
            Some("world".into()),
            IntrinsicBase::CommWorld,
            false,
            Protocol::Unspecified,
            vec![],
        );
        let w = comm_arg(&world);
        b.intrinsic(
            MAIN,
            Some("rank".into()),
            IntrinsicBase::CommRank,
            false,
            Protocol::Unspecified,
            vec![w.clone()],
        );
        b.intrinsic(
            MAIN,
            Some("size".into()),
            IntrinsicBase::CommSize,
            false,
            Protocol::Unspecified,
            vec![w],
        );
        b
    }

    pub fn main(&self) -> ScopeId {
        MAIN
    }

    pub fn world(&self) -> Comm {
        self.world.clone()
    }

    pub fn num_qubits(&self) -> u32 {
        self.num_qubits
    }

    /// Name of the SSA value holding the world size.
    pub fn size_value(&self) -> &'static str {
        "size"
    }

    pub fn operations(&self, scope: ScopeId) -> &[Operation] {
        &self.scopes[scope.0].ops
    }

    fn fresh(&mut self, prefix: &str) -> String {
        let n = self.next_value;
        self.next_value += 1;
        format!("{prefix}.{n}")
    }

    fn push(&mut self, scope: ScopeId, op: Operation) {
        self.scopes[scope.0].ops.push(op);
    }

    fn new_scope(&mut self, parent: ScopeId) -> ScopeId {
        self.scopes.push(Scope {
            parent: Some(parent),
            ops: Vec::new(),
        });
        ScopeId(self.scopes.len() - 1)
    }

    fn intrinsic(
        &mut self,
        scope: ScopeId,
        result: Option<String>,
        base: IntrinsicBase,
        array: bool,
        protocol: Protocol,
        args: Vec<TypedOperand>,
    ) {
        self.intrinsic_with_attrs(scope, result, base, array, protocol, args, Vec::new());
    }

    #[allow(clippy::too_many_arguments)]
    fn intrinsic_with_attrs(
        &mut self,
        scope: ScopeId,
        result: Option<String>,
        base: IntrinsicBase,
        array: bool,
        protocol: Protocol,
        args: Vec<TypedOperand>,
        attrs: Vec<Attr>,
    ) {
        let name = IntrinsicClassification {
            base,
            array,
            protocol,
        }
        .name();
        let ret = intrinsics::signature_of(&name)
            .expect("builder only emits known intrinsics")
            .ret
            .ty();
        self.push(
            scope,
            Operation::Call {
                result,
                callee: name,
                ret,
                args,
                attrs,
            },
        );
    }

    pub fn gate(&mut self, scope: ScopeId, gate: Gate, qubits: &[u32]) {
        assert_eq!(gate.arity(), qubits.len(), "wrong number of qubits for {gate}");
        self.push(
            scope,
            Operation::Gate {
                gate,
                qubits: qubits.to_vec(),
            },
        );
    }

    pub fn h(&mut self, scope: ScopeId, q: u32) {
        self.gate(scope, Gate::H, &[q]);
    }

    pub fn x(&mut self, scope: ScopeId, q: u32) {
        self.gate(scope, Gate::X, &[q]);
    }

    pub fn z(&mut self, scope: ScopeId, q: u32) {
        self.gate(scope, Gate::Z, &[q]);
    }

    pub fn cnot(&mut self, scope: ScopeId, control: u32, target: u32) {
        self.gate(scope, Gate::Cnot, &[control, target]);
    }

    pub fn cz(&mut self, scope: ScopeId, a: u32, b: u32) {
        self.gate(scope, Gate::Cz, &[a, b]);
    }

    pub fn cp(&mut self, scope: ScopeId, theta: f64, control: u32, target: u32) {
        self.gate(scope, Gate::Cp(theta), &[control, target]);
    }

    pub fn measure(&mut self, scope: ScopeId, qubit: u32, result: u32) {
        self.push(scope, Operation::Measure { qubit, result });
    }

    pub fn reset(&mut self, scope: ScopeId, qubit: u32) {
        self.push(scope, Operation::Reset { qubit });
    }

    pub fn qsend(&mut self, scope: ScopeId, q: u32, dest: i64, comm: &Comm, protocol: Protocol) {
        let args = vec![TypedOperand::qubit(q), TypedOperand::i32(dest), comm_arg(comm)];
        self.intrinsic(scope, None, IntrinsicBase::Qsend, false, protocol, args);
    }

    pub fn qrecv(&mut self, scope: ScopeId, slot: u32, src: i64, comm: &Comm, protocol: Protocol) {
        let args = vec![
            TypedOperand::new(Type::qubit_out(), Operand::slot(slot, Type::qubit_out())),
            TypedOperand::i32(src),
            comm_arg(comm),
        ];
        self.intrinsic(scope, None, IntrinsicBase::Qrecv, false, protocol, args);
    }

    pub fn qsend_array(
        &mut self,
        scope: ScopeId,
        base: u32,
        count: u32,
        dest: i64,
        comm: &Comm,
        protocol: Protocol,
    ) {
        let args = vec![
            array_arg(base),
            TypedOperand::i32(count.into()),
            TypedOperand::i32(dest),
            comm_arg(comm),
        ];
        self.intrinsic(scope, None, IntrinsicBase::Qsend, true, protocol, args);
    }

    pub fn qrecv_array(
        &mut self,
        scope: ScopeId,
        base: u32,
        count: u32,
        src: i64,
        comm: &Comm,
        protocol: Protocol,
    ) {
        let args = vec![
            TypedOperand::new(Type::array_out(), Operand::slot(base, Type::array_out())),
            TypedOperand::i32(count.into()),
            TypedOperand::i32(src),
            comm_arg(comm),
        ];
        self.intrinsic(scope, None, IntrinsicBase::Qrecv, true, protocol, args);
    }

    pub fn measure_send(&mut self, scope: ScopeId, q: u32, dest: i64, comm: &Comm) {
        let args = vec![TypedOperand::qubit(q), TypedOperand::i32(dest), comm_arg(comm)];
        self.intrinsic(
            scope,
            None,
            IntrinsicBase::MeasureSend,
            false,
            Protocol::Unspecified,
            args,
        );
    }

    pub fn measure_send_array(&mut self, scope: ScopeId, base: u32, count: u32, dest: i64, comm: &Comm) {
        let args = vec![
            array_arg(base),
            TypedOperand::i32(count.into()),
            TypedOperand::i32(dest),
            comm_arg(comm),
        ];
        self.intrinsic(
            scope,
            None,
            IntrinsicBase::MeasureSend,
            true,
            Protocol::Unspecified,
            args,
        );
    }

    /// Receive `count` measured bits into result slots starting at `bits`.
    pub fn measure_recv(
        &mut self,
        scope: ScopeId,
        bits: u32,
        count: u32,
        src: i64,
        comm: &Comm,
        array: bool,
    ) {
        let bit_ty = Type::i1().ptr();
        let args = vec![
            TypedOperand::new(bit_ty.clone(), Operand::slot(bits, bit_ty)),
            TypedOperand::i32(count.into()),
            TypedOperand::i32(src),
            comm_arg(comm),
        ];
        self.intrinsic(
            scope,
            None,
            IntrinsicBase::MeasureRecv,
            array,
            Protocol::Unspecified,
            args,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn collective(
        &mut self,
        scope: ScopeId,
        base: IntrinsicBase,
        send: (u32, u32),
        recv: (u32, u32),
        root: i64,
        comm: &Comm,
        protocol: Protocol,
        attrs: Vec<Attr>,
    ) {
        let args = vec![
            array_arg(send.0),
            TypedOperand::i32(send.1.into()),
            array_arg(recv.0),
            TypedOperand::i32(recv.1.into()),
            TypedOperand::i32(root),
            comm_arg(comm),
        ];
        self.intrinsic_with_attrs(scope, None, base, false, protocol, args, attrs);
    }

    /// Scatter `send.1` qubits from `send.0` on the root into `recv.1`-sized chunks.
    pub fn scatter(
        &mut self,
        scope: ScopeId,
        send: (u32, u32),
        recv: (u32, u32),
        root: i64,
        comm: &Comm,
        protocol: Protocol,
    ) {
        self.collective(scope, IntrinsicBase::Scatter, send, recv, root, comm, protocol, vec![]);
    }

    pub fn gather(
        &mut self,
        scope: ScopeId,
        send: (u32, u32),
        recv: (u32, u32),
        root: i64,
        comm: &Comm,
        protocol: Protocol,
    ) {
        self.collective(scope, IntrinsicBase::Gather, send, recv, root, comm, protocol, vec![]);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn reduce(
        &mut self,
        scope: ScopeId,
        send: (u32, u32),
        recv: (u32, u32),
        root: i64,
        comm: &Comm,
        protocol: Protocol,
        fold: FoldGate,
    ) {
        let attrs = if fold == FoldGate::default() {
            vec![]
        } else {
            vec![Attr::kv(FOLD_ATTR, fold.keyword())]
        };
        self.collective(scope, IntrinsicBase::Reduce, send, recv, root, comm, protocol, attrs);
    }

    /// Expose qubit slot `q`. On the root `q` is the shared qubit; on every
    /// other member it is the slot that receives the reference.
    pub fn expose(&mut self, scope: ScopeId, q: u32, root: i64, comm: &Comm) {
        let args = vec![TypedOperand::qubit(q), TypedOperand::i32(root), comm_arg(comm)];
        self.intrinsic(scope, None, IntrinsicBase::Expose, false, Protocol::Unspecified, args);
    }

    pub fn expose_array(&mut self, scope: ScopeId, base: u32, count: u32, root: i64, comm: &Comm) {
        let args = vec![
            array_arg(base),
            TypedOperand::i32(count.into()),
            TypedOperand::i32(root),
            comm_arg(comm),
        ];
        self.intrinsic(scope, None, IntrinsicBase::Expose, true, Protocol::Unspecified, args);
    }

    /// Build a communicator over the given world ranks (executed by every rank
    /// reaching `scope`; only members may query their rank in it).
    pub fn comm_from_ranks(&mut self, scope: ScopeId, ranks: &[u32]) -> Comm {
        let group = self.fresh("group");
        let comm = self.fresh("comm");
        let list = TypedOperand::new(
            Type::rank_list(ranks.len() as u64),
            Operand::IntList(ranks.iter().map(|&r| i64::from(r)).collect()),
        );
        self.intrinsic(
            scope,
            Some(group.clone()),
            IntrinsicBase::GroupFromRanks,
            false,
            Protocol::Unspecified,
            vec![list],
        );
        self.intrinsic(
            scope,
            Some(comm.clone()),
            IntrinsicBase::CommFromGroup,
            false,
            Protocol::Unspecified,
            vec![TypedOperand::new(Type::group(), Operand::Local(group))],
        );
        Comm {
            value: comm,
            rank: None,
        }
    }

    fn rank_value(&mut self, scope: ScopeId, comm: &Comm) -> String {
        match &comm.rank {
            Some(r) => r.clone(),
            None => {
                let r = self.fresh("crank");
                self.intrinsic(
                    scope,
                    Some(r.clone()),
                    IntrinsicBase::CommRank,
                    false,
                    Protocol::Unspecified,
                    vec![comm_arg(comm)],
                );
                r
            }
        }
    }

    /// Child scope whose operations run only where `comm_rank(comm) == rank`.
    pub fn rank_conditional(&mut self, scope: ScopeId, comm: &Comm, rank: i64) -> ScopeId {
        assert!(rank >= 0, "rank must be non-negative");
        let rank_value = self.rank_value(scope, comm);
        let then_scope = self.new_scope(scope);
        self.push(
            scope,
            Operation::RankConditional {
                rank_value,
                rank,
                then_scope,
                else_scope: None,
            },
        );
        then_scope
    }

    /// Like [`Builder::rank_conditional`], with a second scope for every other rank.
    pub fn rank_conditional_else(
        &mut self,
        scope: ScopeId,
        comm: &Comm,
        rank: i64,
    ) -> (ScopeId, ScopeId) {
        assert!(rank >= 0, "rank must be non-negative");
        let rank_value = self.rank_value(scope, comm);
        let then_scope = self.new_scope(scope);
        let else_scope = self.new_scope(scope);
        self.push(
            scope,
            Operation::RankConditional {
                rank_value,
                rank,
                then_scope,
                else_scope: Some(else_scope),
            },
        );
        (then_scope, else_scope)
    }

    pub fn finalize(&mut self, scope: ScopeId) {
        self.intrinsic(scope, None, IntrinsicBase::Finalize, false, Protocol::Unspecified, vec![]);
    }

    pub fn emit<E: Executor>(&self, executor: &E) -> Result<E::Output, BuildError> {
        let terminated = matches!(
            self.scopes[MAIN.0].ops.last(),
            Some(Operation::Call { callee, .. })
                if *callee == IntrinsicClassification {
                    base: IntrinsicBase::Finalize,
                    array: false,
                    protocol: Protocol::Unspecified,
                }.name()
        );
        if !terminated {
            return Err(BuildError::UnterminatedProgram);
        }
        Ok(executor.execute(self))
    }

    /// Declarations needed by the recorded operations, sorted by name.
    fn declarations(&self) -> Vec<Function> {
        let mut names = BTreeSet::new();
        for s in &self.scopes {
            for op in &s.ops {
                match op {
                    Operation::Gate { gate, .. } => {
                        names.insert(QisFn::for_gate(gate).name().to_string());
                    }
                    Operation::Measure { .. } => {
                        names.insert(QisFn::Mz.name().to_string());
                    }
                    Operation::Reset { .. } => {
                        names.insert(QisFn::Reset.name().to_string());
                    }
                    Operation::Call { callee, .. } => {
                        names.insert(callee.clone());
                    }
                    Operation::RankConditional { .. } => {}
                }
            }
        }
        names
            .into_iter()
            .map(|n| match QisFn::from_name(&n) {
                Some(q) => q.declaration(),
                None => intrinsics::declaration(&n).expect("known intrinsic"),
            })
            .collect()
    }

    fn opaque_types(decls: &[Function]) -> Vec<String> {
        let mut set = BTreeSet::new();
        for d in decls {
            let mut names = Vec::new();
            d.ret.opaque_names(&mut names);
            for p in &d.params {
                p.ty.opaque_names(&mut names);
            }
            set.extend(names);
        }
        set.into_iter().collect()
    }

    fn entry_attrs(&self) -> Vec<Attr> {
        vec![
            Attr::flag(ENTRY_POINT_ATTR),
            Attr::kv(NUM_QUBITS_ATTR, self.num_qubits.to_string()),
        ]
    }
}

fn comm_arg(comm: &Comm) -> TypedOperand {
    TypedOperand::new(Type::comm(), Operand::Local(comm.value.clone()))
}

fn array_arg(base: u32) -> TypedOperand {
    TypedOperand::new(Type::array(), Operand::slot(base, Type::array()))
}

fn gate_args(gate: &Gate, qubits: &[u32]) -> Vec<TypedOperand> {
    let mut args = Vec::new();
    if let Gate::Cp(theta) = gate {
        args.push(TypedOperand::new(Type::Double, Operand::Float(*theta)));
    }
    args.extend(qubits.iter().map(|&q| TypedOperand::qubit(q)));
    args
}

fn measure_args(qubit: u32, result: u32) -> Vec<TypedOperand> {
    vec![
        TypedOperand::qubit(qubit),
        TypedOperand::new(Type::result(), Operand::slot(result, Type::result())),
    ]
}

/// Consumes a finished scope tree.
pub trait Executor {
    type Output;
    fn execute(&self, builder: &Builder) -> Self::Output;
}

/// Builds an in-memory [`Program`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ProgramExecutor;

struct BlockWriter {
    blocks: Vec<Block>,
    current: Block,
    next_cond: usize,
}

impl BlockWriter {
    fn push(&mut self, result: Option<String>, op: Op) {
        self.current.instructions.push(Instruction {
            result,
            op,
            span: Span::default(),
        });
    }

    fn start(&mut self, label: String) {
        let done = std::mem::replace(
            &mut self.current,
            Block {
                label,
                instructions: Vec::new(),
            },
        );
        self.blocks.push(done);
    }

    fn scope(&mut self, b: &Builder, scope: ScopeId) {
        for op in &b.scopes[scope.0].ops {
            match op {
                Operation::Gate { gate, qubits } => self.push(
                    None,
                    Instruction::call(QisFn::for_gate(gate).name(), Type::Void, gate_args(gate, qubits)),
                ),
                Operation::Measure { qubit, result } => self.push(
                    None,
                    Instruction::call(QisFn::Mz.name(), Type::Void, measure_args(*qubit, *result)),
                ),
                Operation::Reset { qubit } => self.push(
                    None,
                    Instruction::call(
                        QisFn::Reset.name(),
                        Type::Void,
                        vec![TypedOperand::qubit(*qubit)],
                    ),
                ),
                Operation::Call {
                    result,
                    callee,
                    ret,
                    args,
                    attrs,
                } => self.push(
                    result.clone(),
                    Op::Call {
                        callee: callee.clone(),
                        ret: ret.clone(),
                        args: args.clone(),
                        attrs: attrs.clone(),
                    },
                ),
                Operation::RankConditional {
                    rank_value,
                    rank,
                    then_scope,
                    else_scope,
                } => {
                    let n = self.next_cond;
                    self.next_cond += 1;
                    let cond = format!("is.{n}");
                    let then_l = format!("if.then.{n}");
                    let else_l = format!("if.else.{n}");
                    let end_l = format!("if.end.{n}");
                    self.push(
                        Some(cond.clone()),
                        Op::Icmp {
                            pred: IcmpPred::Eq,
                            ty: Type::i32(),
                            lhs: Operand::Local(rank_value.clone()),
                            rhs: Operand::Int(*rank),
                        },
                    );
                    self.push(
                        None,
                        Op::CondBr {
                            cond: Operand::Local(cond),
                            then_dest: then_l.clone(),
                            else_dest: if else_scope.is_some() {
                                else_l.clone()
                            } else {
                                end_l.clone()
                            },
                        },
                    );
                    self.start(then_l);
                    self.scope(b, *then_scope);
                    self.push(None, Op::Br { dest: end_l.clone() });
                    if let Some(e) = else_scope {
                        self.start(else_l);
                        self.scope(b, *e);
                        self.push(None, Op::Br { dest: end_l.clone() });
                    }
                    self.start(end_l);
                }
            }
        }
    }
}

impl Executor for ProgramExecutor {
    type Output = Program;

    fn execute(&self, b: &Builder) -> Program {
        let decls = b.declarations();
        let mut w = BlockWriter {
            blocks: Vec::new(),
            current: Block {
                label: "entry".into(),
                instructions: Vec::new(),
            },
            next_cond: 0,
        };
        w.scope(b, MAIN);
        w.push(None, Op::Ret { value: None });
        let last = w.current;
        let mut blocks = w.blocks;
        blocks.push(last);
        let mut functions = decls;
        let opaque_types = Builder::opaque_types(&functions);
        functions.push(Function {
            name: "main".into(),
            ret: Type::Void,
            params: Vec::new(),
            attrs: b.entry_attrs(),
            blocks: Some(blocks),
            span: Span::default(),
        });
        Program {
            opaque_types,
            functions,
        }
    }
}

/// Writes NetQIR text straight from the scope tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrinterExecutor;

struct TextWriter {
    out: String,
    next_cond: usize,
}

fn fmt_args(args: &[TypedOperand]) -> String {
    args.iter()
        .map(typed_operand_text)
        .collect::<Vec<_>>()
        .join(", ")
}

impl TextWriter {
    fn call(&mut self, result: Option<&str>, ret: &Type, callee: &str, args: &[TypedOperand], attrs: &[Attr]) {
        self.out.push_str("  ");
        if let Some(r) = result {
            let _ = write!(self.out, "%{r} = ");
        }
        let _ = write!(self.out, "call {ret} @{callee}({})", fmt_args(args));
        for a in attrs {
            match &a.value {
                Some(v) => {
                    let _ = write!(self.out, " \"{}\"=\"{}\"", a.key, v);
                }
                None => {
                    let _ = write!(self.out, " \"{}\"", a.key);
                }
            }
        }
        self.out.push('\n');
    }

    fn scope(&mut self, b: &Builder, scope: ScopeId) {
        for op in &b.scopes[scope.0].ops {
            match op {
                Operation::Gate { gate, qubits } => {
                    self.call(None, &Type::Void, QisFn::for_gate(gate).name(), &gate_args(gate, qubits), &[])
                }
                Operation::Measure { qubit, result } => {
                    self.call(None, &Type::Void, QisFn::Mz.name(), &measure_args(*qubit, *result), &[])
                }
                Operation::Reset { qubit } => self.call(
                    None,
                    &Type::Void,
                    QisFn::Reset.name(),
                    &[TypedOperand::qubit(*qubit)],
                    &[],
                ),
                Operation::Call {
                    result,
                    callee,
                    ret,
                    args,
                    attrs,
                } => self.call(result.as_deref(), ret, callee, args, attrs),
                Operation::RankConditional {
                    rank_value,
                    rank,
                    then_scope,
                    else_scope,
                } => {
                    let n = self.next_cond;
                    self.next_cond += 1;
                    let _ = writeln!(self.out, "  %is.{n} = icmp eq i32 %{rank_value}, {rank}");
                    let other = if else_scope.is_some() { "if.else" } else { "if.end" };
                    let _ = writeln!(
                        self.out,
                        "  br i1 %is.{n}, label %if.then.{n}, label %{other}.{n}"
                    );
                    let _ = writeln!(self.out, "\nif.then.{n}:");
                    self.scope(b, *then_scope);
                    let _ = writeln!(self.out, "  br label %if.end.{n}");
                    if let Some(e) = else_scope {
                        let _ = writeln!(self.out, "\nif.else.{n}:");
                        self.scope(b, *e);
                        let _ = writeln!(self.out, "  br label %if.end.{n}");
                    }
                    let _ = writeln!(self.out, "\nif.end.{n}:");
                }
            }
        }
    }
}

impl Executor for PrinterExecutor {
    type Output = String;

    fn execute(&self, b: &Builder) -> String {
        let decls = b.declarations();
        let mut w = TextWriter {
            out: String::new(),
            next_cond: 0,
        };
        for t in Builder::opaque_types(&decls) {
            let _ = writeln!(w.out, "%{t} = type opaque");
        }
        w.out.push('\n');
        for d in &decls {
            let params: Vec<String> = d.params.iter().map(|p| p.ty.to_string()).collect();
            let _ = writeln!(w.out, "declare {} @{}({})", d.ret, d.name, params.join(", "));
        }
        let _ = writeln!(
            w.out,
            "\ndefine void @main() \"{ENTRY_POINT_ATTR}\" \"{NUM_QUBITS_ATTR}\"=\"{}\" {{\nentry:",
            b.num_qubits
        );
        w.scope(b, MAIN);
        w.out.push_str("  ret void\n}\n");
        w.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate;
    use crate::parser::parse;

    fn teleport() -> Builder {
        let mut b = Builder::new(1);
        let (main, world) = (b.main(), b.world());
        let s = b.rank_conditional(main, &world, 0);
        b.qsend(s, 0, 1, &world, Protocol::Unspecified);
        let r = b.rank_conditional(main, &world, 1);
        b.qrecv(r, 0, 0, &world, Protocol::Unspecified);
        b.finalize(main);
        b
    }

    #[test]
    fn initialize_comes_first() {
        let text = teleport().emit(&PrinterExecutor).unwrap();
        let body = &text[text.find("define").unwrap()..];
        let first = body.find("@__netqir__").unwrap();
        assert!(body[first..].starts_with("@__netqir__initialize"));
        assert!(body.find("initialize").unwrap() < body.find("@__netqir__finalize").unwrap());
    }

    #[test]
    fn executors_agree() {
        let b = teleport();
        let text = b.emit(&PrinterExecutor).unwrap();
        let program = b.emit(&ProgramExecutor).unwrap();
        assert_eq!(print(&program), text);
        assert_eq!(parse(&text).unwrap(), program);
        assert!(validate(&program).is_empty(), "{:?}", validate(&program));
    }

    #[test]
    fn missing_finalize_is_rejected() {
        let mut b = Builder::new(1);
        let main = b.main();
        b.h(main, 0);
        assert_eq!(b.emit(&PrinterExecutor), Err(BuildError::UnterminatedProgram));
    }

    #[test]
    fn independent_programs() {
        let mut a = Builder::new(1);
        let b = Builder::new(1);
        let m = a.main();
        a.h(m, 0);
        assert_eq!(b.operations(b.main()).len(), 4);
        assert_eq!(a.operations(a.main()).len(), 5);
    }

    #[test]
    fn empty_conditional_emits_empty_then_block() {
        let mut b = Builder::new(1);
        let (main, world) = (b.main(), b.world());
        b.rank_conditional(main, &world, 0);
        b.finalize(main);
        let p = b.emit(&ProgramExecutor).unwrap();
        let then = p.entry().unwrap().block("if.then.0").unwrap();
        assert_eq!(then.instructions.len(), 1);
        assert!(validate(&p).is_empty());
    }

    #[test]
    fn nested_conditionals_nest_branches() {
        let mut b = Builder::new(2);
        let (main, world) = (b.main(), b.world());
        let outer = b.rank_conditional(main, &world, 1);
        let sub = b.comm_from_ranks(outer, &[1, 0]);
        let inner = b.rank_conditional(outer, &sub, 0);
        b.x(inner, 1);
        b.finalize(main);
        let text = b.emit(&PrinterExecutor).unwrap();
        let p = parse(&text).unwrap();
        let blocks = p.entry().unwrap().blocks.as_ref().unwrap();
        let labels: Vec<&str> = blocks.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["entry", "if.then.0", "if.then.1", "if.end.1", "if.end.0"]);
        assert!(validate(&p).is_empty(), "{:?}", validate(&p));
    }
}
