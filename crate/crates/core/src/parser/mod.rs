//! Textual NetQIR: a small LLVM-IR-like surface syntax.
//!
//! [`parse`] turns `.nqir` text into a [`Program`]; [`print`] produces the
//! canonical text. `parse(print(p)) == p` for every valid program.

mod lexer;
pub(crate) mod printer;

use std::fmt;

pub use lexer::{tokenize, Token, TokenKind};
pub use printer::print;

use crate::ir::{
    classify, validate, Attr, BinOp, Block, Diagnostic, Function, IcmpPred, Instruction, LineCol,
    Location, Op, Operand, Param, Program, QisFn, Rule, Severity, Span, Type, TypedOperand,
    QIS_PREFIX,
};
use crate::ir::intrinsics::NETQIR_PREFIX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lex,
    Syntax,
    UnknownIntrinsic,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: LineCol,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParseErrorKind::Lex => "lex",
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::UnknownIntrinsic => "unknown-intrinsic",
        };
        write!(f, "{}: error[{kind}]: {}", self.pos, self.message)
    }
}

impl ParseError {
    pub fn to_diagnostic(&self) -> Diagnostic {
        let rule = match self.kind {
            ParseErrorKind::Lex => Rule::Lex,
            ParseErrorKind::Syntax => Rule::Syntax,
            ParseErrorKind::UnknownIntrinsic => Rule::UnknownIntrinsic,
        };
        Diagnostic {
            rule,
            severity: Severity::Error,
            location: Location {
                function: None,
                block: None,
                pos: Some(self.pos),
            },
            message: self.message.clone(),
        }
    }
}

pub fn parse(text: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(text)?;
    Parser { tokens, at: 0 }.module()
}

/// Parse, then validate. Either step failing yields its diagnostics.
pub fn parse_and_validate(text: &str) -> Result<Program, Vec<Diagnostic>> {
    let program = parse(text).map_err(|e| vec![e.to_diagnostic()])?;
    let diags = validate(&program);
    if diags.is_empty() {
        Ok(program)
    } else {
        Err(diags)
    }
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.at].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let i = (self.at + n).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn pos(&self) -> LineCol {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            kind: ParseErrorKind::Syntax,
            pos: self.pos(),
            message: msg.into(),
        })
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        self.error(format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), TokenKind::Word(x) if x == w)
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), TokenKind::Punct(x) if *x == c)
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.is_word(w) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{w}`"))
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.is_punct(c) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn expect_local(&mut self) -> PResult<String> {
        match self.peek().clone() {
            TokenKind::Local(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.unexpected("a local name"),
        }
    }

    fn expect_int(&mut self) -> PResult<i64> {
        match *self.peek() {
            TokenKind::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn module(mut self) -> PResult<Program> {
        let mut program = Program::default();
        loop {
            match self.peek().clone() {
                TokenKind::Eof => return Ok(program),
                TokenKind::Local(name) => {
                    self.bump();
                    self.expect_punct('=')?;
                    self.expect_word("type")?;
                    self.expect_word("opaque")?;
                    program.opaque_types.push(name);
                }
                TokenKind::Word(w) if w == "declare" => {
                    let f = self.declaration()?;
                    program.functions.push(f);
                }
                TokenKind::Word(w) if w == "define" => {
                    let f = self.definition()?;
                    program.functions.push(f);
                }
                _ => return self.unexpected("`declare`, `define` or a type declaration"),
            }
        }
    }

    fn check_known_callee(&self, name: &str, pos: LineCol) -> PResult<()> {
        if name.starts_with(NETQIR_PREFIX) {
            if let Err(e) = classify(name) {
                return Err(ParseError {
                    kind: ParseErrorKind::UnknownIntrinsic,
                    pos,
                    message: e.to_string(),
                });
            }
        } else if name.starts_with(QIS_PREFIX) && QisFn::from_name(name).is_none() {
            return Err(ParseError {
                kind: ParseErrorKind::UnknownIntrinsic,
                pos,
                message: format!("`@{name}` is not in the supported gate set"),
            });
        }
        Ok(())
    }

    fn global_name(&mut self) -> PResult<(String, LineCol)> {
        let pos = self.pos();
        match self.peek().clone() {
            TokenKind::Global(n) => {
                self.bump();
                Ok((n, pos))
            }
            _ => self.unexpected("a function name"),
        }
    }

    fn declaration(&mut self) -> PResult<Function> {
        let start = self.pos();
        self.expect_word("declare")?;
        let ret = self.ty()?;
        let (name, name_pos) = self.global_name()?;
        self.check_known_callee(&name, name_pos)?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.is_punct(')') {
            loop {
                params.push(Param {
                    ty: self.ty()?,
                    name: None,
                });
                if self.is_punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        let attrs = self.attrs()?;
        Ok(Function {
            name,
            ret,
            params,
            attrs,
            blocks: None,
            span: Span(Some(start)),
        })
    }

    fn definition(&mut self) -> PResult<Function> {
        let start = self.pos();
        self.expect_word("define")?;
        let ret = self.ty()?;
        let (name, _) = self.global_name()?;
        self.expect_punct('(')?;
        let mut params = Vec::new();
        if !self.is_punct(')') {
            loop {
                let ty = self.ty()?;
                let pname = match self.peek().clone() {
                    TokenKind::Local(n) => {
                        self.bump();
                        Some(n)
                    }
                    _ => None,
                };
                params.push(Param { ty, name: pname });
                if self.is_punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        let attrs = self.attrs()?;
        self.expect_punct('{')?;
        let mut blocks = Vec::new();
        while !self.is_punct('}') {
            blocks.push(self.block()?);
        }
        self.expect_punct('}')?;
        Ok(Function {
            name,
            ret,
            params,
            attrs,
            blocks: Some(blocks),
            span: Span(Some(start)),
        })
    }

    fn attrs(&mut self) -> PResult<Vec<Attr>> {
        let mut attrs = Vec::new();
        while let TokenKind::Str(key) = self.peek().clone() {
            self.bump();
            let value = if self.is_punct('=') {
                self.bump();
                match self.peek().clone() {
                    TokenKind::Str(v) => {
                        self.bump();
                        Some(v)
                    }
                    _ => return self.unexpected("an attribute value string"),
                }
            } else {
                None
            };
            attrs.push(Attr { key, value });
        }
        Ok(attrs)
    }

    fn block(&mut self) -> PResult<Block> {
        let label = match (self.peek().clone(), self.peek_at(1).clone()) {
            (TokenKind::Word(w), TokenKind::Punct(':')) => w,
            (TokenKind::Int(n), TokenKind::Punct(':')) => n.to_string(),
            _ => return self.unexpected("a block label"),
        };
        self.bump();
        self.bump();
        let mut instructions = Vec::new();
        loop {
            let at_label = matches!(
                (self.peek(), self.peek_at(1)),
                (TokenKind::Word(_) | TokenKind::Int(_), TokenKind::Punct(':'))
            );
            if at_label || self.is_punct('}') || matches!(self.peek(), TokenKind::Eof) {
                break;
            }
            instructions.push(self.instruction()?);
        }
        Ok(Block {
            label,
            instructions,
        })
    }

    fn instruction(&mut self) -> PResult<Instruction> {
        let pos = self.pos();
        let result = if let TokenKind::Local(n) = self.peek().clone() {
            self.bump();
            self.expect_punct('=')?;
            Some(n)
        } else {
            None
        };
        let word = match self.peek().clone() {
            TokenKind::Word(w) => w,
            _ => return self.unexpected("an instruction"),
        };
        let op_pos = self.pos();
        self.bump();
        let op = match word.as_str() {
            "call" => {
                let ret = self.ty()?;
                let (callee, callee_pos) = self.global_name()?;
                self.check_known_callee(&callee, callee_pos)?;
                self.expect_punct('(')?;
                let mut args = Vec::new();
                if !self.is_punct(')') {
                    loop {
                        args.push(self.typed_operand()?);
                        if self.is_punct(',') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect_punct(')')?;
                let attrs = self.attrs()?;
                Op::Call {
                    callee,
                    ret,
                    args,
                    attrs,
                }
            }
            "icmp" => {
                let pred = match self.peek().clone() {
                    TokenKind::Word(p) if p == "eq" => IcmpPred::Eq,
                    TokenKind::Word(p) if p == "ne" => IcmpPred::Ne,
                    TokenKind::Word(p) if p == "slt" => IcmpPred::Slt,
                    _ => return self.unexpected("`eq`, `ne` or `slt`"),
                };
                self.bump();
                let ty = self.ty()?;
                let lhs = self.operand(&ty)?;
                self.expect_punct(',')?;
                let rhs = self.operand(&ty)?;
                Op::Icmp { pred, ty, lhs, rhs }
            }
            "add" | "sub" => {
                let op = if word == "add" { BinOp::Add } else { BinOp::Sub };
                let ty = self.ty()?;
                let lhs = self.operand(&ty)?;
                self.expect_punct(',')?;
                let rhs = self.operand(&ty)?;
                Op::Binary { op, ty, lhs, rhs }
            }
            "br" => {
                if self.is_word("label") {
                    self.bump();
                    let dest = self.expect_local()?;
                    Op::Br { dest }
                } else {
                    let ty = self.ty()?;
                    if ty != Type::i1() {
                        return Err(ParseError {
                            kind: ParseErrorKind::Syntax,
                            pos: op_pos,
                            message: format!("conditional branch on {ty}, expected i1"),
                        });
                    }
                    let cond = self.operand(&ty)?;
                    self.expect_punct(',')?;
                    self.expect_word("label")?;
                    let then_dest = self.expect_local()?;
                    self.expect_punct(',')?;
                    self.expect_word("label")?;
                    let else_dest = self.expect_local()?;
                    Op::CondBr {
                        cond,
                        then_dest,
                        else_dest,
                    }
                }
            }
            "ret" => {
                if self.is_word("void") {
                    self.bump();
                    Op::Ret { value: None }
                } else {
                    Op::Ret {
                        value: Some(self.typed_operand()?),
                    }
                }
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax,
                    pos: op_pos,
                    message: format!("unknown instruction `{other}`"),
                })
            }
        };
        Ok(Instruction {
            result,
            op,
            span: Span(Some(pos)),
        })
    }

    fn typed_operand(&mut self) -> PResult<TypedOperand> {
        let ty = self.ty()?;
        let value = self.operand(&ty)?;
        Ok(TypedOperand { ty, value })
    }

    fn operand(&mut self, ty: &Type) -> PResult<Operand> {
        match self.peek().clone() {
            TokenKind::Local(n) => {
                self.bump();
                Ok(Operand::Local(n))
            }
            TokenKind::Int(v) => {
                self.bump();
                if *ty == Type::Double {
                    return Ok(Operand::Float(v as f64));
                }
                Ok(Operand::Int(v))
            }
            TokenKind::Float(v) => {
                self.bump();
                Ok(Operand::Float(v))
            }
            TokenKind::Word(w) => match w.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Operand::Bool(w == "true"))
                }
                "null" => {
                    self.bump();
                    Ok(Operand::Null)
                }
                "inttoptr" => {
                    self.bump();
                    self.expect_punct('(')?;
                    let from = self.ty()?;
                    if !matches!(from, Type::Int(_)) {
                        return self.error(format!("inttoptr source must be an integer, got {from}"));
                    }
                    let value = self.expect_int()?;
                    self.expect_word("to")?;
                    let to = self.ty()?;
                    self.expect_punct(')')?;
                    Ok(Operand::IntToPtr { value, ty: to })
                }
                _ => self.unexpected("an operand"),
            },
            TokenKind::Punct('[') => {
                self.bump();
                let mut items = Vec::new();
                if !self.is_punct(']') {
                    loop {
                        let ety = self.ty()?;
                        if !matches!(ety, Type::Int(_)) {
                            return self.error("aggregate elements must be integers");
                        }
                        items.push(self.expect_int()?);
                        if self.is_punct(',') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect_punct(']')?;
                Ok(Operand::IntList(items))
            }
            _ => self.unexpected("an operand"),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let mut t = match self.peek().clone() {
            TokenKind::Word(w) if w == "void" => {
                self.bump();
                Type::Void
            }
            TokenKind::Word(w) if w == "double" => {
                self.bump();
                Type::Double
            }
            TokenKind::Word(w) if w.starts_with('i') && w[1..].parse::<u32>().is_ok() => {
                self.bump();
                Type::Int(w[1..].parse().expect("checked above"))
            }
            TokenKind::Local(n) => {
                self.bump();
                Type::Named(n)
            }
            TokenKind::Punct('[') => {
                self.bump();
                let n = self.expect_int()?;
                if n < 0 {
                    return self.error("negative array length");
                }
                self.expect_word("x")?;
                let elem = self.ty()?;
                self.expect_punct(']')?;
                Type::Array(n as u64, Box::new(elem))
            }
            _ => return self.unexpected("a type"),
        };
        while self.is_punct('*') {
            self.bump();
            t = t.ptr();
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
%Qubit = type opaque
declare void @__quantum__qis__h__body(%Qubit*)
define void @main() "entry_point" "num_qubits"="1" {
entry:
  call void @__quantum__qis__h__body(%Qubit* null)
  ret void
}
"#;

    #[test]
    fn parses_minimal_module() {
        let p = parse(SMALL).unwrap();
        assert_eq!(p.opaque_types, vec!["Qubit"]);
        assert_eq!(p.functions.len(), 2);
        let main = p.entry().unwrap();
        assert_eq!(main.num_qubits(), Some(1));
        assert_eq!(main.blocks.as_ref().unwrap()[0].instructions.len(), 2);
    }

    #[test]
    fn round_trips_through_printer() {
        let p = parse(SMALL).unwrap();
        let text = print(&p);
        assert_eq!(parse(&text).unwrap(), p);
        assert_eq!(print(&parse(&text).unwrap()), text);
    }

    #[test]
    fn unknown_intrinsic_is_located() {
        let src = "define void @main() {\nentry:\n  call void @__netqir__qsend_quantum(i32 0)\n  ret void\n}\n";
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIntrinsic);
        assert_eq!(err.pos, LineCol { line: 3, col: 13 });
    }

    #[test]
    fn unknown_gate_is_rejected() {
        let src = "declare void @__quantum__qis__t__body(%Qubit*)\n";
        let err = parse(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIntrinsic);
        assert_eq!(err.pos, LineCol { line: 1, col: 14 });
    }

    #[test]
    fn syntax_error_points_at_token() {
        let err = parse("define void @main() {\nentry:\n  frob\n}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.pos, LineCol { line: 3, col: 3 });
    }

    #[test]
    fn declaration_alone_lacks_entry() {
        let p = parse("%Qubit = type opaque\n%Comm = type opaque\ndeclare void @__netqir__qsend(%Qubit*, i32, %Comm*)\n").unwrap();
        assert_eq!(p.functions.len(), 1);
        let diags = validate(&p);
        assert!(diags.iter().any(|d| d.rule == Rule::EntryMissing));
    }
}
