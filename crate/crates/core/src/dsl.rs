//! The diagram definition code: a small Mermaid flowchart subset.
//!
//! Grammar (EBNF):
//!
//! ```text
//! diagram   = header , { "\n" , line } ;
//! header    = "flowchart" , ws , ("TD" | "BT") ;
//! line      = node_def | edge_def | "" ;
//! node_def  = id , ( "[" , label , "]" | "{" , label , "}" ) ;
//! edge_def  = id , ws , "-->" , ws , id ;
//! id        = "n" , digit , { digit } ;
//! label     = escaped-char-sequence without unescaped ] } newline ;
//! ```
//!
//! Statements render as `id[label]`, questions as `id{label}`. The bracket
//! characters and backslash are escaped inside labels so that emission and
//! parsing are exact inverses. The code text doubles as the hard positive
//! caption for its diagram.

use thiserror::Error;

use crate::graph::{DiagramGraph, Edge, FlowDirection, Node, NodeKind};

/// Diagram definition text conforming to the module grammar.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiagramCode {
    pub text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("syntax error at line {line}, column {column}: expected {expected}")]
    SyntaxError { line: usize, column: usize, expected: String },
    #[error("line {line}: edge references unknown node {id}")]
    UnknownNodeReference { line: usize, id: String },
    #[error("line {line}: duplicate node id {id}")]
    DuplicateNodeId { line: usize, id: String },
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
}

/// Non-fatal finding recorded while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// Bracket style and the label's '?' suffix disagree; bracket style wins.
    KindMismatch { line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub graph: DiagramGraph,
    pub warnings: Vec<ParseWarning>,
}

fn escape_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if matches!(c, '[' | ']' | '{' | '}' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Deterministic code emission: header, one node line per node in node
/// order, one edge line per edge in edge order. LF separators, no trailing
/// newline.
pub fn emit_code(g: &DiagramGraph) -> DiagramCode {
    debug_assert!(g.is_valid(), "emit_code requires a valid graph: {:?}", g.validate());
    let mut text = String::from(match g.direction {
        FlowDirection::TopDown => "flowchart TD",
        FlowDirection::BottomUp => "flowchart BT",
    });
    for node in &g.nodes {
        text.push('\n');
        text.push_str(&node.id);
        let (open, close) = match node.kind {
            NodeKind::Statement => ('[', ']'),
            NodeKind::Question => ('{', '}'),
        };
        text.push(open);
        text.push_str(&escape_label(&node.label));
        text.push(close);
    }
    for edge in &g.edges {
        text.push('\n');
        text.push_str(&edge.from_id);
        text.push_str(" --> ");
        text.push_str(&edge.to_id);
    }
    DiagramCode { text }
}

struct LineScanner {
    chars: Vec<char>,
    pos: usize,
    line_no: usize,
}

impl LineScanner {
    fn new(raw: &str, line_no: usize) -> Self {
        LineScanner { chars: raw.chars().collect(), pos: 0, line_no }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn error(&self, expected: &str) -> DslError {
        DslError::SyntaxError {
            line: self.line_no,
            column: self.column(),
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) -> usize {
        let mut n = 0;
        while matches!(self.peek(), Some(' ') | Some('\t')) {
            self.pos += 1;
            n += 1;
        }
        n
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn node_id(&mut self) -> Result<String, DslError> {
        if self.peek() != Some('n') {
            return Err(self.error("node id starting with 'n'"));
        }
        let start = self.pos;
        self.pos += 1;
        let mut digits = 0;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            digits += 1;
        }
        if digits == 0 {
            return Err(self.error("digits after 'n' in node id"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn label_until(&mut self, close: char) -> Result<String, DslError> {
        let mut label = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(self.error(&format!("closing '{close}'")));
                }
                Some('\\') => match self.bump() {
                    Some(c) => label.push(c),
                    None => return Err(self.error("character after escape backslash")),
                },
                Some(c) if c == close => {
                    if label.is_empty() {
                        return Err(self.error("non-empty label"));
                    }
                    return Ok(label);
                }
                Some(']') | Some('}') => {
                    self.pos -= 1;
                    return Err(self.error(&format!("closing '{close}' (unescaped bracket)")));
                }
                Some(c) => label.push(c),
            }
        }
    }
}

enum Statement {
    NodeDef { id: String, label: String, kind: NodeKind },
    EdgeDef { from: String, to: String },
}

fn parse_line(scanner: &mut LineScanner) -> Result<Statement, DslError> {
    let id = scanner.node_id()?;
    match scanner.peek() {
        Some(open @ ('[' | '{')) => {
            scanner.bump();
            let close = if open == '[' { ']' } else { '}' };
            let label = scanner.label_until(close)?;
            scanner.skip_ws();
            if !scanner.at_end() {
                return Err(scanner.error("end of line after node definition"));
            }
            let kind = if open == '[' { NodeKind::Statement } else { NodeKind::Question };
            Ok(Statement::NodeDef { id, label, kind })
        }
        Some(' ') | Some('\t') => {
            scanner.skip_ws();
            for expected in ['-', '-', '>'] {
                if scanner.peek() != Some(expected) {
                    return Err(scanner.error("'-->'"));
                }
                scanner.bump();
            }
            if scanner.skip_ws() == 0 {
                return Err(scanner.error("whitespace after '-->'"));
            }
            let to = scanner.node_id()?;
            scanner.skip_ws();
            if !scanner.at_end() {
                return Err(scanner.error("end of line after edge definition"));
            }
            Ok(Statement::EdgeDef { from: id, to })
        }
        None => Err(scanner.error("'[', '{', or ' --> ' after node id")),
        Some(_) => Err(scanner.error("'[', '{', or ' --> ' after node id")),
    }
}

/// Parse diagram code back into a graph. Inverse of [`emit_code`] on its
/// image; tolerates blank lines and leading/trailing spaces per line. Node
/// kind comes from the bracket style; a disagreeing '?' suffix is recorded
/// as a warning.
pub fn parse_code(input: &str) -> Result<ParseOutcome, DslError> {
    let mut direction = None;
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut pending_edges: Vec<(usize, String, String)> = Vec::new();
    let mut warnings = Vec::new();

    for (idx, raw_line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw_line.trim_matches([' ', '\t', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        if direction.is_none() {
            let mut scanner = LineScanner::new(trimmed, line_no);
            let word: String = {
                let start = scanner.pos;
                while scanner.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                    scanner.pos += 1;
                }
                scanner.chars[start..scanner.pos].iter().collect()
            };
            if word != "flowchart" {
                return Err(DslError::SyntaxError {
                    line: line_no,
                    column: 1,
                    expected: "'flowchart' header".to_string(),
                });
            }
            if scanner.skip_ws() == 0 {
                return Err(scanner.error("whitespace after 'flowchart'"));
            }
            let rest: String = scanner.chars[scanner.pos..].iter().collect();
            direction = Some(match rest.trim_end() {
                "TD" => FlowDirection::TopDown,
                "BT" => FlowDirection::BottomUp,
                _ => return Err(scanner.error("'TD' or 'BT'")),
            });
            continue;
        }

        let mut scanner = LineScanner::new(trimmed, line_no);
        match parse_line(&mut scanner)? {
            Statement::NodeDef { id, label, kind } => {
                if nodes.iter().any(|n| n.id == id) {
                    return Err(DslError::DuplicateNodeId { line: line_no, id });
                }
                if kind != NodeKind::for_label(&label) {
                    warnings.push(ParseWarning::KindMismatch { line: line_no, id: id.clone() });
                }
                nodes.push(Node { id, label, kind });
            }
            Statement::EdgeDef { from, to } => {
                pending_edges.push((line_no, from, to));
            }
        }
    }

    if direction.is_none() {
        return Err(DslError::SyntaxError {
            line: input.lines().count().max(1),
            column: 1,
            expected: "'flowchart' header".to_string(),
        });
    }
    for (line, from, to) in pending_edges {
        for id in [&from, &to] {
            if !nodes.iter().any(|n| &n.id == id) {
                return Err(DslError::UnknownNodeReference { line, id: id.clone() });
            }
        }
        edges.push(Edge::new(from, to));
    }

    Ok(ParseOutcome {
        graph: DiagramGraph::new(nodes, edges, direction.unwrap()),
        warnings,
    })
}

/// Byte-stream entry point: validates UTF-8 first, then parses.
pub fn parse_code_bytes(input: &[u8]) -> Result<ParseOutcome, DslError> {
    let text = std::str::from_utf8(input).map_err(|_| DslError::InvalidUtf8)?;
    parse_code(text)
}
