//! The selection language of the `Query` verb.
//!
//! A query is a boolean combination of comparisons over element aliases:
//!
//! ```text
//! expr       := or
//! or         := and ( OR and )*
//! and        := unary ( AND unary )*
//! unary      := NOT unary | '(' expr ')' | comparison
//! comparison := alias '.' field op literal
//! alias      := 'e' <digits>          e1 .. eN, N given by the `elements` argument
//! field      := tag | content | type | code
//! op         := '=' | '!=' | '<>' | LIKE | NOT LIKE
//! literal    := '...'                 '' stands for one quote
//! ```
//!
//! Keywords and field names are case-insensitive. A record matches when some
//! assignment of its elements to the aliases (the same element may serve
//! several aliases) makes the expression true. `=` is exact; `LIKE` is
//! case-insensitive with `%` for any run, `_` for one character and `\` to
//! escape either.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::ElementQuad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Tag,
    Content,
    Type,
    Code,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::Tag, Field::Content, Field::Type, Field::Code];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Tag => "tag",
            Field::Content => "content",
            Field::Type => "type",
            Field::Code => "code",
        }
    }

    pub fn of(self, quad: &ElementQuad) -> &str {
        match self {
            Field::Tag => &quad.tag,
            Field::Content => &quad.content,
            Field::Type => &quad.type_,
            Field::Code => &quad.code,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Like,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    /// 1-based alias index.
    pub alias: usize,
    pub field: Field,
    pub op: CompareOp,
    pub literal: String,
}

impl Comparison {
    pub fn holds(&self, quad: &ElementQuad) -> bool {
        let value = self.field.of(quad);
        match self.op {
            CompareOp::Eq => value == self.literal,
            CompareOp::Ne => value != self.literal,
            CompareOp::Like => like(value, &self.literal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryExpr {
    Compare(Comparison),
    Not(Box<QueryExpr>),
    And(Vec<QueryExpr>),
    Or(Vec<QueryExpr>),
}

impl QueryExpr {
    /// Flattens nested conjunctions and disjunctions; the parser only
    /// produces normalized trees.
    pub fn normalized(self) -> QueryExpr {
        fn flatten(items: Vec<QueryExpr>, is_and: bool) -> Vec<QueryExpr> {
            let mut out = Vec::new();
            for item in items.into_iter().map(QueryExpr::normalized) {
                match (item, is_and) {
                    (QueryExpr::And(inner), true) | (QueryExpr::Or(inner), false) => out.extend(inner),
                    (other, _) => out.push(other),
                }
            }
            out
        }
        match self {
            QueryExpr::Compare(c) => QueryExpr::Compare(c),
            QueryExpr::Not(inner) => QueryExpr::Not(Box::new(inner.normalized())),
            QueryExpr::And(items) => collapse(flatten(items, true), QueryExpr::And),
            QueryExpr::Or(items) => collapse(flatten(items, false), QueryExpr::Or),
        }
    }

    fn max_alias(&self) -> usize {
        match self {
            QueryExpr::Compare(c) => c.alias,
            QueryExpr::Not(inner) => inner.max_alias(),
            QueryExpr::And(items) | QueryExpr::Or(items) => {
                items.iter().map(QueryExpr::max_alias).max().unwrap_or(0)
            }
        }
    }
}

fn collapse(mut items: Vec<QueryExpr>, build: fn(Vec<QueryExpr>) -> QueryExpr) -> QueryExpr {
    if items.len() == 1 {
        items.pop().unwrap()
    } else {
        build(items)
    }
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryExpr::Compare(c) => {
                let op = match c.op {
                    CompareOp::Eq => "=",
                    CompareOp::Ne => "!=",
                    CompareOp::Like => "LIKE",
                };
                write!(
                    f,
                    "e{}.{} {} '{}'",
                    c.alias,
                    c.field.as_str(),
                    op,
                    c.literal.replace('\'', "''")
                )
            }
            QueryExpr::Not(inner) => match **inner {
                QueryExpr::And(_) | QueryExpr::Or(_) => write!(f, "NOT ({inner})"),
                _ => write!(f, "NOT {inner}"),
            },
            QueryExpr::And(items) => write_joined(f, items, " AND ", |e| {
                matches!(e, QueryExpr::And(_) | QueryExpr::Or(_))
            }),
            QueryExpr::Or(items) => write_joined(f, items, " OR ", |e| matches!(e, QueryExpr::Or(_))),
        }
    }
}

fn write_joined(
    f: &mut fmt::Formatter<'_>,
    items: &[QueryExpr],
    sep: &str,
    needs_parens: fn(&QueryExpr) -> bool,
) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        if needs_parens(item) {
            write!(f, "({item})")?;
        } else {
            write!(f, "{item}")?;
        }
    }
    Ok(())
}

/// A parsed query together with its declared number of aliases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub elements: usize,
    pub expr: QueryExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at position {position}")]
pub struct QueryError {
    /// 1-based character position in the query text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Dot,
    LParen,
    RParen,
    Eq,
    Ne,
    Str(String),
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    end: usize,
}

fn lex(sql: &str) -> Result<Lexer, QueryError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        let err = |message: &str| QueryError {
            position: pos,
            message: message.to_string(),
        };
        match c {
            c if c.is_whitespace() => {
                i += 1;
            }
            '.' => {
                toks.push((Tok::Dot, pos));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            '=' => {
                toks.push((Tok::Eq, pos));
                i += 1;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                toks.push((Tok::Ne, pos));
                i += 2;
            }
            '<' if chars.get(i + 1) == Some(&'>') => {
                toks.push((Tok::Ne, pos));
                i += 2;
            }
            '\'' => {
                let mut lit = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err("unterminated string literal")),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            lit.push('\'');
                            i += 2;
                        }
                        Some('\'') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            lit.push(ch);
                            i += 1;
                        }
                    }
                }
                toks.push((Tok::Str(lit), pos));
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Word(chars[start..i].iter().collect()), pos));
            }
            _ => return Err(err(&format!("unexpected character `{c}`"))),
        }
    }
    Ok(Lexer {
        toks,
        end: chars.len() + 1,
    })
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
    elements: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn bump(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.at).map(|(t, _)| t.clone());
        self.at += 1;
        tok
    }

    fn or(&mut self) -> Result<QueryExpr, QueryError> {
        let mut items = vec![self.and()?];
        while self.keyword("OR") {
            self.bump();
            items.push(self.and()?);
        }
        Ok(collapse(items, QueryExpr::Or))
    }

    fn and(&mut self) -> Result<QueryExpr, QueryError> {
        let mut items = vec![self.unary()?];
        while self.keyword("AND") {
            self.bump();
            items.push(self.unary()?);
        }
        Ok(collapse(items, QueryExpr::And))
    }

    fn unary(&mut self) -> Result<QueryExpr, QueryError> {
        if self.keyword("NOT") {
            self.bump();
            return Ok(QueryExpr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let inner = self.or()?;
            if self.peek() != Some(&Tok::RParen) {
                return self.err("expected `)`");
            }
            self.bump();
            return Ok(inner);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<QueryExpr, QueryError> {
        let alias_pos = self.pos();
        let alias = match self.peek() {
            Some(Tok::Word(w)) if w.len() > 1 && (w.starts_with('e') || w.starts_with('E')) => {
                match w[1..].parse::<usize>() {
                    Ok(n) if w[1..].bytes().all(|b| b.is_ascii_digit()) => n,
                    _ => return self.err(format!("expected an element alias, found `{w}`")),
                }
            }
            Some(Tok::Word(w)) => return self.err(format!("expected an element alias, found `{w}`")),
            Some(_) => return self.err("expected an element alias"),
            None => return self.err("unexpected end of query"),
        };
        if alias == 0 || alias > self.elements {
            return Err(QueryError {
                position: alias_pos,
                message: format!("alias e{alias} is outside e1..e{}", self.elements),
            });
        }
        self.bump();
        if self.peek() != Some(&Tok::Dot) {
            return self.err("expected `.` after alias");
        }
        self.bump();
        let field = match self.peek() {
            Some(Tok::Word(w)) => match Field::ALL.iter().find(|f| w.eq_ignore_ascii_case(f.as_str())) {
                Some(f) => *f,
                None => return self.err(format!("unknown field `{w}`")),
            },
            _ => return self.err("expected a field name"),
        };
        self.bump();
        let mut negate = false;
        let op = match self.peek() {
            Some(Tok::Eq) => CompareOp::Eq,
            Some(Tok::Ne) => CompareOp::Ne,
            _ if self.keyword("LIKE") => CompareOp::Like,
            _ if self.keyword("NOT") => {
                self.bump();
                if !self.keyword("LIKE") {
                    return self.err("expected LIKE after NOT");
                }
                negate = true;
                CompareOp::Like
            }
            _ => return self.err("expected a comparison operator"),
        };
        self.bump();
        let literal = match self.peek() {
            Some(Tok::Str(s)) => s.clone(),
            _ => return self.err("expected a quoted string"),
        };
        self.bump();
        let cmp = QueryExpr::Compare(Comparison {
            alias,
            field,
            op,
            literal,
        });
        Ok(if negate { QueryExpr::Not(Box::new(cmp)) } else { cmp })
    }
}

pub fn parse_query(sql: &str, elements: usize) -> Result<Query, QueryError> {
    if elements == 0 {
        return Err(QueryError {
            position: 0,
            message: "elements must be at least 1".into(),
        });
    }
    let lexer = lex(sql)?;
    let mut parser = Parser {
        toks: lexer.toks,
        at: 0,
        end: lexer.end,
        elements,
    };
    if parser.peek().is_none() {
        return parser.err("empty query");
    }
    let expr = parser.or()?;
    if parser.peek().is_some() {
        return parser.err("unexpected input after expression");
    }
    Ok(Query { elements, expr })
}

/// Case-insensitive `LIKE` matching.
pub fn like(value: &str, pattern: &str) -> bool {
    #[derive(Clone, Copy)]
    enum P {
        Any,
        One,
        Lit(char),
    }
    let mut pat = Vec::new();
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        pat.push(match c {
            '%' => P::Any,
            '_' => P::One,
            '\\' => match chars.next() {
                Some(e) => P::Lit(e),
                None => P::Lit('\\'),
            },
            c => P::Lit(c),
        });
    }
    let fold = |c: char| c.to_lowercase().collect::<String>();
    let value: Vec<String> = value.chars().map(fold).collect();

    // reachable[j]: pattern prefix of length j matches the value prefix so far
    let mut reachable = vec![false; pat.len() + 1];
    reachable[0] = true;
    let close = |r: &mut Vec<bool>| {
        for j in 0..pat.len() {
            if r[j] && matches!(pat[j], P::Any) {
                r[j + 1] = true;
            }
        }
    };
    close(&mut reachable);
    for ch in &value {
        let mut next = vec![false; pat.len() + 1];
        for j in 0..pat.len() {
            if !reachable[j] {
                continue;
            }
            match pat[j] {
                P::Any => next[j] = true,
                P::One => next[j + 1] = true,
                P::Lit(l) if fold(l) == *ch => next[j + 1] = true,
                P::Lit(_) => {}
            }
        }
        close(&mut next);
        reachable = next;
    }
    reachable[pat.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tri {
    False,
    True,
    Unknown,
}

impl Query {
    /// Whether some assignment of `quads` to the aliases satisfies the
    /// expression. Quads are grouped by the truth values they give each
    /// alias's comparisons, and aliases are bound one at a time with
    /// three-valued evaluation pruning dead branches.
    pub fn matches(&self, quads: &[ElementQuad]) -> bool {
        if quads.is_empty() {
            return false;
        }
        let mut atoms: Vec<&Comparison> = Vec::new();
        collect_atoms(&self.expr, &mut atoms);

        let aliases = self.elements.max(self.expr.max_alias());
        // choices[a]: distinct truth vectors over all atoms for alias a+1;
        // entries for atoms of other aliases are unused.
        let choices: Vec<Vec<Vec<bool>>> = (1..=aliases)
            .map(|alias| {
                let mut seen = BTreeSet::new();
                for quad in quads {
                    let sig: Vec<bool> = atoms
                        .iter()
                        .map(|c| c.alias == alias && c.holds(quad))
                        .collect();
                    seen.insert(sig);
                }
                seen.into_iter().collect()
            })
            .collect();

        let mut bound: Vec<Option<&Vec<bool>>> = vec![None; aliases];
        search(&self.expr, &atoms, &choices, &mut bound, 0)
    }
}

fn collect_atoms<'a>(expr: &'a QueryExpr, out: &mut Vec<&'a Comparison>) {
    match expr {
        QueryExpr::Compare(c) => {
            if !out.iter().any(|a| std::ptr::eq(*a, c)) {
                out.push(c);
            }
        }
        QueryExpr::Not(inner) => collect_atoms(inner, out),
        QueryExpr::And(items) | QueryExpr::Or(items) => {
            items.iter().for_each(|i| collect_atoms(i, out))
        }
    }
}

fn search<'a>(
    expr: &QueryExpr,
    atoms: &[&Comparison],
    choices: &'a [Vec<Vec<bool>>],
    bound: &mut Vec<Option<&'a Vec<bool>>>,
    next: usize,
) -> bool {
    match eval3(expr, atoms, bound) {
        Tri::True => return true,
        Tri::False => return false,
        Tri::Unknown => {}
    }
    if next == bound.len() {
        return false;
    }
    for sig in &choices[next] {
        bound[next] = Some(sig);
        if search(expr, atoms, choices, bound, next + 1) {
            bound[next] = None;
            return true;
        }
    }
    bound[next] = None;
    false
}

fn eval3(expr: &QueryExpr, atoms: &[&Comparison], bound: &[Option<&Vec<bool>>]) -> Tri {
    match expr {
        QueryExpr::Compare(c) => {
            let idx = atoms.iter().position(|a| std::ptr::eq(*a, c)).unwrap();
            match bound[c.alias - 1] {
                None => Tri::Unknown,
                Some(sig) if sig[idx] => Tri::True,
                Some(_) => Tri::False,
            }
        }
        QueryExpr::Not(inner) => match eval3(inner, atoms, bound) {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        },
        QueryExpr::And(items) => {
            let mut result = Tri::True;
            for item in items {
                match eval3(item, atoms, bound) {
                    Tri::False => return Tri::False,
                    Tri::Unknown => result = Tri::Unknown,
                    Tri::True => {}
                }
            }
            result
        }
        QueryExpr::Or(items) => {
            let mut result = Tri::False;
            for item in items {
                match eval3(item, atoms, bound) {
                    Tri::True => return Tri::True,
                    Tri::Unknown => result = Tri::Unknown,
                    Tri::False => {}
                }
            }
            result
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmp(alias: usize, field: Field, op: CompareOp, lit: &str) -> QueryExpr {
        QueryExpr::Compare(Comparison {
            alias,
            field,
            op,
            literal: lit.to_string(),
        })
    }

    #[test]
    fn swahili_query() {
        let q = parse_query("e1.code='x-sil-SWA'", 1).unwrap();
        assert_eq!(q.expr, cmp(1, Field::Code, CompareOp::Eq, "x-sil-SWA"));
    }

    #[test]
    fn alias_out_of_range() {
        let err = parse_query("e2.code='x'", 1).unwrap_err();
        assert_eq!(err.position, 1);
        assert!(err.message.contains("e2"));
    }

    #[test]
    fn compound_query_round_trips() {
        let sql = "e1.tag='subject' AND (e2.code LIKE 'x-sil-%' OR NOT e2.content='')";
        let q = parse_query(sql, 2).unwrap();
        assert_eq!(
            q.expr,
            QueryExpr::And(vec![
                cmp(1, Field::Tag, CompareOp::Eq, "subject"),
                QueryExpr::Or(vec![
                    cmp(2, Field::Code, CompareOp::Like, "x-sil-%"),
                    QueryExpr::Not(Box::new(cmp(2, Field::Content, CompareOp::Eq, ""))),
                ]),
            ])
        );
        let printed = q.expr.to_string();
        assert_eq!(parse_query(&printed, 2).unwrap(), q);
    }

    #[test]
    fn keywords_are_case_insensitive_and_spacing_free() {
        let a = parse_query("e1.CODE = 'a' and not E1.tag<>'b'", 1).unwrap();
        let b = parse_query("e1.code='a' AND NOT e1.tag!='b'", 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quotes_are_doubled() {
        let q = parse_query("e1.content='O''Brien'", 1).unwrap();
        assert_eq!(q.expr, cmp(1, Field::Content, CompareOp::Eq, "O'Brien"));
        assert_eq!(q.expr.to_string(), "e1.content = 'O''Brien'");
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = [
            ("e1.code=", 9),
            ("e1.colour='x'", 4),
            ("e1.code='x' AND", 16),
            ("(e1.code='x'", 13),
            ("e1.code='x", 9),
            ("e1 code='x'", 4),
            ("x1.code='x'", 1),
            ("e1.code='x' e1.tag='y'", 13),
            ("", 1),
        ];
        for (sql, pos) in cases {
            let err = parse_query(sql, 1).unwrap_err();
            assert_eq!(err.position, pos, "{sql}: {err}");
        }
        assert!(parse_query("e1.code='x'", 0).is_err());
    }

    #[test]
    fn like_semantics() {
        assert!(like("x-sil-SWA", "x-sil-%"));
        assert!(like("X-SIL-swa", "x-sil-%"));
        assert!(like("abc", "a_c"));
        assert!(!like("abbc", "a_c"));
        assert!(like("", "%"));
        assert!(!like("", "_"));
        assert!(like("50%", "50\\%"));
        assert!(!like("500", "50\\%"));
        assert!(like("a%b", "%\\%%"));
    }

    fn quad(tag: &str, content: &str, ty: &str, code: &str) -> ElementQuad {
        ElementQuad::new(tag, content, ty, code)
    }

    #[test]
    fn existential_semantics() {
        let quads = [
            quad("subject", "", "olac:language", "x-sil-SWA"),
            quad("title", "Kamusi", "", ""),
        ];
        assert!(parse_query("e1.code='x-sil-SWA'", 1).unwrap().matches(&quads));
        assert!(!parse_query("e1.tag='nosuchtag'", 1).unwrap().matches(&quads));
        // two different elements
        assert!(parse_query("e1.tag='title' AND e2.code='x-sil-SWA'", 2)
            .unwrap()
            .matches(&quads));
        // one element cannot be both
        assert!(!parse_query("e1.tag='title' AND e1.code='x-sil-SWA'", 1)
            .unwrap()
            .matches(&quads));
        // the same element may serve two aliases
        assert!(parse_query("e1.tag='title' AND e2.tag='title'", 2)
            .unwrap()
            .matches(&quads));
        assert!(!parse_query("e1.tag!='x'", 1).unwrap().matches(&[]));
    }
}
