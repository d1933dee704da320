//! Compact text form of quadtree layouts.
//!
//! ```text
//! stack  := layout ( "/" layout )*
//! layout := UINT "x" UINT ":" node
//! node   := "0" | "1"
//!         | "q" UINT "," UINT "(" node node node node ")"
//!         | "r" UINT "(" node node ")"
//!         | "c" UINT "(" node node ")"
//! ```
//!
//! `q r,c` is a four-way split whose upper-left child ends at row `r` and
//! column `c` (absolute, inclusive). `r` and `c` nodes are two-way splits
//! along rows or columns. Children appear in canonical order. A root-only
//! layout of state 0 on a 4x4 grid is `4x4:0`.

use std::fmt::Write as _;

use super::region::{Region, Split};
use super::stack::LayoutStack;
use super::tree::{Node, NodeKind, QuadtreeLayout};
use crate::error::{Error, Result};

pub fn serialize_layout(layout: &QuadtreeLayout) -> String {
    let mut out = format!("{}x{}:", layout.rows(), layout.cols());
    write_node(layout, 0, &mut out);
    out
}

fn write_node(layout: &QuadtreeLayout, id: usize, out: &mut String) {
    match &layout.node(id).kind {
        NodeKind::Leaf { state, .. } => out.push(if *state == 1 { '1' } else { '0' }),
        NodeKind::Internal { split, children } => {
            match split {
                Split::Quad { row, col } => write!(out, "q{row},{col}(").unwrap(),
                Split::Rows { row } => write!(out, "r{row}(").unwrap(),
                Split::Cols { col } => write!(out, "c{col}(").unwrap(),
            }
            for &child in &children[..split.arity()] {
                write_node(layout, child, out);
            }
            out.push(')');
        }
    }
}

pub fn deserialize_layout(text: &str) -> Result<QuadtreeLayout> {
    let mut parser = Parser::new(text);
    let layout = parser.layout()?;
    parser.expect_end()?;
    Ok(layout)
}

pub fn serialize_stack(stack: &LayoutStack) -> String {
    stack
        .layers()
        .iter()
        .map(serialize_layout)
        .collect::<Vec<_>>()
        .join("/")
}

pub fn deserialize_stack(text: &str) -> Result<LayoutStack> {
    let mut parser = Parser::new(text);
    let mut layers = vec![parser.layout()?];
    while parser.peek() == Some(b'/') {
        parser.pos += 1;
        layers.push(parser.layout()?);
    }
    parser.expect_end()?;
    LayoutStack::new(layers).map_err(|e| Error::Parse {
        offset: text.len(),
        message: e.to_string(),
    })
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn next(&mut self) -> Result<u8> {
        match self.peek() {
            Some(b) => {
                self.pos += 1;
                Ok(b)
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn expect(&mut self, want: u8) -> Result<()> {
        let at = self.pos;
        let got = self.next()?;
        if got != want {
            self.pos = at;
            return self.err(format!("expected '{}', found '{}'", want as char, got as char));
        }
        Ok(())
    }

    fn expect_end(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some(b) => self.err(format!("trailing input starting with '{}'", b as char)),
        }
    }

    fn uint(&mut self) -> Result<usize> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return if self.peek().is_none() {
                self.err("unexpected end of input")
            } else {
                self.err("expected an unsigned integer")
            };
        }
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        digits.parse().or_else(|_| {
            self.pos = start;
            self.err("integer out of range")
        })
    }

    fn layout(&mut self) -> Result<QuadtreeLayout> {
        let rows = self.uint()?;
        self.expect(b'x')?;
        let cols = self.uint()?;
        self.expect(b':')?;
        if rows == 0 || cols == 0 {
            return self.err("grid dimensions must be positive");
        }
        let mut nodes = Vec::new();
        self.node(Region::full(rows, cols), &mut nodes)?;
        Ok(QuadtreeLayout::from_nodes(rows, cols, nodes))
    }

    fn node(&mut self, region: Region, nodes: &mut Vec<Node>) -> Result<usize> {
        let id = nodes.len();
        let at = self.pos;
        let tag = self.next()?;
        let split = match tag {
            b'0' | b'1' => {
                nodes.push(Node {
                    region,
                    kind: NodeKind::Leaf {
                        state: tag - b'0',
                        slot: 0,
                    },
                });
                return Ok(id);
            }
            b'q' => {
                let row = self.uint()?;
                self.expect(b',')?;
                let col = self.uint()?;
                Split::Quad { row, col }
            }
            b'r' => Split::Rows { row: self.uint()? },
            b'c' => Split::Cols { col: self.uint()? },
            other => {
                self.pos = at;
                return self.err(format!("unexpected character '{}'", other as char));
            }
        };
        if !region.admits(split) {
            self.pos = at;
            return self.err(format!("split does not fit region {region}"));
        }
        self.expect(b'(')?;
        nodes.push(Node {
            region,
            kind: NodeKind::Internal {
                split,
                children: [0; 4],
            },
        });
        let (regions, arity) = region.child_regions(split);
        let mut children = [0usize; 4];
        for k in 0..arity {
            children[k] = self.node(regions[k], nodes)?;
        }
        self.expect(b')')?;
        nodes[id].kind = NodeKind::Internal { split, children };
        Ok(id)
    }
}
