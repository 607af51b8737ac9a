//! The `__netqir__*` function set: name classification and signatures.
//!
//! Names decompose as `__netqir__<base>[_array][_teledata|_telegate]`. Only
//! the combinations listed by [`IntrinsicBase::allows`] exist.

use std::fmt;

use super::{Protocol, Type};

pub const NETQIR_PREFIX: &str = "__netqir__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntrinsicBase {
    Initialize,
    Finalize,
    CommWorld,
    CommRank,
    CommSize,
    GroupFromRanks,
    CommFromGroup,
    Qsend,
    Qrecv,
    MeasureSend,
    MeasureRecv,
    Scatter,
    Gather,
    Reduce,
    Expose,
}

impl IntrinsicBase {
    pub const ALL: [IntrinsicBase; 15] = [
        IntrinsicBase::Initialize,
        IntrinsicBase::Finalize,
        IntrinsicBase::CommWorld,
        IntrinsicBase::CommRank,
        IntrinsicBase::CommSize,
        IntrinsicBase::GroupFromRanks,
        IntrinsicBase::CommFromGroup,
        IntrinsicBase::Qsend,
        IntrinsicBase::Qrecv,
        IntrinsicBase::MeasureSend,
        IntrinsicBase::MeasureRecv,
        IntrinsicBase::Scatter,
        IntrinsicBase::Gather,
        IntrinsicBase::Reduce,
        IntrinsicBase::Expose,
    ];

    pub fn stem(self) -> &'static str {
        match self {
            IntrinsicBase::Initialize => "initialize",
            IntrinsicBase::Finalize => "finalize",
            IntrinsicBase::CommWorld => "comm_world",
            IntrinsicBase::CommRank => "comm_rank",
            IntrinsicBase::CommSize => "comm_size",
            IntrinsicBase::GroupFromRanks => "group_from_ranks",
            IntrinsicBase::CommFromGroup => "comm_from_group",
            IntrinsicBase::Qsend => "qsend",
            IntrinsicBase::Qrecv => "qrecv",
            IntrinsicBase::MeasureSend => "measure_send",
            IntrinsicBase::MeasureRecv => "measure_recv",
            IntrinsicBase::Scatter => "scatter",
            IntrinsicBase::Gather => "gather",
            IntrinsicBase::Reduce => "reduce",
            IntrinsicBase::Expose => "expose",
        }
    }

    fn from_stem(stem: &str) -> Option<IntrinsicBase> {
        IntrinsicBase::ALL.into_iter().find(|b| b.stem() == stem)
    }

    /// Whether the `(array, protocol)` modifier combination names a real intrinsic.
    pub fn allows(self, array: bool, protocol: Protocol) -> bool {
        use IntrinsicBase::*;
        match self {
            Qsend | Qrecv => true,
            MeasureSend | MeasureRecv | Expose => protocol == Protocol::Unspecified,
            Scatter | Gather | Reduce => !array,
            Initialize | Finalize | CommWorld | CommRank | CommSize | GroupFromRanks
            | CommFromGroup => !array && protocol == Protocol::Unspecified,
        }
    }

    /// Intrinsics that move or reference quantum or classical data between ranks.
    pub fn is_communication(self) -> bool {
        use IntrinsicBase::*;
        matches!(
            self,
            Qsend | Qrecv | MeasureSend | MeasureRecv | Scatter | Gather | Reduce | Expose
        )
    }

    pub fn is_collective(self) -> bool {
        use IntrinsicBase::*;
        matches!(self, Scatter | Gather | Reduce | Expose)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntrinsicClassification {
    pub base: IntrinsicBase,
    pub array: bool,
    pub protocol: Protocol,
}

impl IntrinsicClassification {
    /// Rebuild the symbol name this classification was derived from.
    pub fn name(&self) -> String {
        let mut s = format!("{NETQIR_PREFIX}{}", self.base.stem());
        if self.array {
            s.push_str("_array");
        }
        s.push_str(self.protocol.suffix());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown intrinsic `{0}`")]
pub struct UnknownIntrinsic(pub String);

pub fn classify(symbol: &str) -> Result<IntrinsicClassification, UnknownIntrinsic> {
    let unknown = || UnknownIntrinsic(symbol.to_string());
    let mut rest = symbol.strip_prefix(NETQIR_PREFIX).ok_or_else(unknown)?;
    let mut protocol = Protocol::Unspecified;
    for p in [Protocol::Teledata, Protocol::Telegate] {
        if let Some(r) = rest.strip_suffix(p.suffix()) {
            rest = r;
            protocol = p;
            break;
        }
    }
    let (stem, array) = match rest.strip_suffix("_array") {
        Some(r) => (r, true),
        None => (rest, false),
    };
    let base = IntrinsicBase::from_stem(stem).ok_or_else(unknown)?;
    if !base.allows(array, protocol) {
        return Err(unknown());
    }
    Ok(IntrinsicClassification {
        base,
        array,
        protocol,
    })
}

/// Semantic role of an intrinsic parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Qubit,
    /// `%Qubit**` slot receiving a qubit.
    QubitOut,
    Array,
    /// `%Array**` slot receiving an array.
    ArrayOut,
    /// `i1*` classical bit buffer.
    Bits,
    Count,
    /// Source or destination rank within the communicator.
    Peer,
    /// Root rank within the communicator.
    Root,
    Comm,
    Group,
    /// `[N x i32]` constant list of world ranks.
    RankList,
}

impl ParamKind {
    /// LLVM type of the parameter. Rank lists are declared with length 0 and
    /// accept any length at call sites.
    pub fn ty(self) -> Type {
        match self {
            ParamKind::Qubit => Type::qubit(),
            ParamKind::QubitOut => Type::qubit_out(),
            ParamKind::Array => Type::array(),
            ParamKind::ArrayOut => Type::array_out(),
            ParamKind::Bits => Type::i1().ptr(),
            ParamKind::Count | ParamKind::Peer | ParamKind::Root => Type::i32(),
            ParamKind::Comm => Type::comm(),
            ParamKind::Group => Type::group(),
            ParamKind::RankList => Type::rank_list(0),
        }
    }

    /// Whether a call-site argument of type `ty` fits this parameter.
    pub fn accepts(self, ty: &Type) -> bool {
        match self {
            ParamKind::RankList => matches!(ty, Type::Array(_, e) if **e == Type::i32()),
            other => *ty == other.ty(),
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamKind::Qubit => "qubit",
            ParamKind::QubitOut => "qubit out-slot",
            ParamKind::Array => "qubit array",
            ParamKind::ArrayOut => "qubit array out-slot",
            ParamKind::Bits => "bit buffer",
            ParamKind::Count => "count",
            ParamKind::Peer => "peer rank",
            ParamKind::Root => "root rank",
            ParamKind::Comm => "communicator",
            ParamKind::Group => "group",
            ParamKind::RankList => "rank list",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetKind {
    Void,
    I32,
    Comm,
    Group,
}

impl RetKind {
    pub fn ty(self) -> Type {
        match self {
            RetKind::Void => Type::Void,
            RetKind::I32 => Type::i32(),
            RetKind::Comm => Type::comm(),
            RetKind::Group => Type::group(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<ParamKind>,
    pub ret: RetKind,
}

impl Signature {
    pub fn param_types(&self) -> Vec<Type> {
        self.params.iter().map(|p| p.ty()).collect()
    }
}

fn signature_for(c: &IntrinsicClassification) -> Signature {
    use IntrinsicBase::*;
    use ParamKind::*;
    let (params, ret) = match (c.base, c.array) {
        (Initialize | Finalize, _) => (vec![], RetKind::Void),
        (CommWorld, _) => (vec![], RetKind::Comm),
        (CommRank | CommSize, _) => (vec![Comm], RetKind::I32),
        (GroupFromRanks, _) => (vec![RankList], RetKind::Group),
        (CommFromGroup, _) => (vec![Group], RetKind::Comm),
        (Qsend | MeasureSend, false) => (vec![Qubit, Peer, Comm], RetKind::Void),
        (Qsend | MeasureSend, true) => (vec![Array, Count, Peer, Comm], RetKind::Void),
        (Qrecv, false) => (vec![QubitOut, Peer, Comm], RetKind::Void),
        (Qrecv, true) => (vec![ArrayOut, Count, Peer, Comm], RetKind::Void),
        (MeasureRecv, _) => (vec![Bits, Count, Peer, Comm], RetKind::Void),
        (Scatter | Gather | Reduce, _) => {
            (vec![Array, Count, Array, Count, Root, Comm], RetKind::Void)
        }
        (Expose, false) => (vec![Qubit, Root, Comm], RetKind::Void),
        (Expose, true) => (vec![Array, Count, Root, Comm], RetKind::Void),
    };
    Signature { params, ret }
}

pub fn signature_of(name: &str) -> Result<Signature, UnknownIntrinsic> {
    classify(name).map(|c| signature_for(&c))
}

/// Every valid classification, in a fixed order.
pub fn all_classifications() -> Vec<IntrinsicClassification> {
    let mut out = Vec::new();
    for base in IntrinsicBase::ALL {
        for array in [false, true] {
            for protocol in [Protocol::Unspecified, Protocol::Teledata, Protocol::Telegate] {
                if base.allows(array, protocol) {
                    out.push(IntrinsicClassification {
                        base,
                        array,
                        protocol,
                    });
                }
            }
        }
    }
    out
}

/// Every intrinsic name known to the toolchain.
pub fn all_intrinsic_names() -> Vec<String> {
    all_classifications().iter().map(|c| c.name()).collect()
}

/// The point-to-point and collective communication functions.
pub fn communication_names() -> Vec<String> {
    all_classifications()
        .iter()
        .filter(|c| c.base.is_communication())
        .map(|c| c.name())
        .collect()
}

/// Declaration matching the signature of an intrinsic.
pub fn declaration(name: &str) -> Result<super::Function, UnknownIntrinsic> {
    let sig = signature_of(name)?;
    Ok(super::Function::declaration(
        name,
        sig.ret.ty(),
        sig.param_types(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_splits_modifiers() {
        let c = classify("__netqir__qsend_array_teledata").unwrap();
        assert_eq!(c.base, IntrinsicBase::Qsend);
        assert!(c.array);
        assert_eq!(c.protocol, Protocol::Teledata);

        let c = classify("__netqir__scatter_telegate").unwrap();
        assert_eq!((c.base, c.array, c.protocol), (IntrinsicBase::Scatter, false, Protocol::Telegate));

        let c = classify("__netqir__expose").unwrap();
        assert_eq!((c.base, c.array, c.protocol), (IntrinsicBase::Expose, false, Protocol::Unspecified));
    }

    #[test]
    fn classify_rejects_names_outside_the_set() {
        for bad in [
            "__netqir__bogus",
            "__netqir__qsend_quantum",
            "__netqir__expose_teledata",
            "__netqir__scatter_array",
            "__netqir__measure_send_telegate",
            "__netqir__initialize_array",
            "qsend",
            "__netqir__",
        ] {
            assert!(classify(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn name_count() {
        assert_eq!(communication_names().len(), 27);
        assert_eq!(all_intrinsic_names().len(), 34);
    }

    #[test]
    fn qrecv_takes_an_out_slot() {
        let sig = signature_of("__netqir__qrecv").unwrap();
        assert_eq!(sig.param_types(), vec![Type::qubit_out(), Type::i32(), Type::comm()]);
    }

    #[test]
    fn scatter_signature() {
        let sig = signature_of("__netqir__scatter").unwrap();
        assert_eq!(
            sig.param_types(),
            vec![Type::array(), Type::i32(), Type::array(), Type::i32(), Type::i32(), Type::comm()]
        );
    }

    #[test]
    fn measure_recv_array_shares_the_bit_buffer_form() {
        let a = signature_of("__netqir__measure_recv").unwrap();
        let b = signature_of("__netqir__measure_recv_array").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params[0].ty(), Type::i1().ptr());
    }
}
