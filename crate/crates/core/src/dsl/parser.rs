use std::collections::HashSet;

use super::lexer::{lex_line, Line, Token, TokenKind};
use super::{DiagCode, ParseDiagnostic, SourceSpan};
use crate::scale::{
    slugify, validate_scale, Category, ExtensionSlot, Indicator, Role, Scale, ScaleKind,
    ViolationCode, WeightingMode,
};

/// Result of a parse: a scale when no error diagnostics were raised, plus
/// every diagnostic (warnings included).
#[derive(Debug, Clone)]
pub struct Parsed {
    pub scale: Option<Scale>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl Parsed {
    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }
}

/// Parses scale text; on failure returns every diagnostic collected.
pub fn parse_scale(text: &str) -> Result<Scale, Vec<ParseDiagnostic>> {
    let parsed = parse(text);
    parsed.scale.ok_or(parsed.diagnostics)
}

pub fn parse(text: &str) -> Parsed {
    let mut p = Parser::default();
    for (idx, raw) in text.split('\n').enumerate() {
        let Some(line) = lex_line(idx + 1, raw, &mut p.diags) else {
            p.last_content_line = idx + 1;
            p.saw_statement = true;
            continue;
        };
        if line.tokens.is_empty() {
            continue;
        }
        p.last_content_line = line.number;
        if let Err(d) = p.statement(&line) {
            p.diags.push(d);
        }
        p.saw_statement = true;
    }
    p.finish()
}

#[derive(Debug)]
struct Header {
    name: String,
    kind: ScaleKind,
    mode: WeightingMode,
    span: SourceSpan,
}

#[derive(Debug)]
struct CategoryNode {
    category: Category,
    span: SourceSpan,
    indicator_spans: Vec<SourceSpan>,
}

#[derive(Debug, Clone, Copy)]
enum Block {
    None,
    /// A category line failed; its indicators are checked but dropped.
    Broken,
    Category(usize),
}

#[derive(Debug)]
struct Parser {
    header: Option<Header>,
    categories: Vec<CategoryNode>,
    block: Block,
    /// (category index, indicator index, desc seen)
    current_indicator: Option<(usize, usize, bool)>,
    /// The last indicator line failed; a following desc is not reported.
    indicator_broken: bool,
    diags: Vec<ParseDiagnostic>,
    saw_statement: bool,
    reported_missing_header: bool,
    last_content_line: usize,
}

impl Default for Parser {
    fn default() -> Self {
        Parser {
            header: None,
            categories: Vec::new(),
            block: Block::None,
            current_indicator: None,
            indicator_broken: false,
            diags: Vec::new(),
            saw_statement: false,
            reported_missing_header: false,
            last_content_line: 1,
        }
    }
}

type LineResult<T = ()> = Result<T, ParseDiagnostic>;

fn line_span(line: &Line) -> SourceSpan {
    SourceSpan::new(line.number, line.indent + 1, line.len.saturating_sub(line.indent))
}

fn eol_span(line: &Line) -> SourceSpan {
    SourceSpan::new(line.number, line.len + 1, 0)
}

struct Cursor<'a> {
    line: &'a Line,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line) -> Self {
        Cursor { line, pos: 1 }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.line.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.line.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn missing(&self, what: &str) -> ParseDiagnostic {
        ParseDiagnostic::error(
            DiagCode::Expected,
            format!("expected {what} before end of line"),
            eol_span(self.line),
        )
    }

    fn string(&mut self, what: &str) -> LineResult<String> {
        match self.next() {
            Some(Token {
                kind: TokenKind::Str(s),
                ..
            }) => Ok(s.clone()),
            Some(t) => Err(ParseDiagnostic::error(
                DiagCode::Expected,
                format!("expected {what} (a quoted string), found {}", t.describe()),
                t.span,
            )),
            None => Err(self.missing(what)),
        }
    }

    fn word(&mut self, what: &str) -> LineResult<(&'a str, SourceSpan)> {
        match self.next() {
            Some(Token {
                kind: TokenKind::Word(w),
                span,
            }) => Ok((w.as_str(), *span)),
            Some(t) => Err(ParseDiagnostic::error(
                DiagCode::Expected,
                format!("expected {what}, found {}", t.describe()),
                t.span,
            )),
            None => Err(self.missing(what)),
        }
    }

    fn number(&mut self, key: &str) -> LineResult<f64> {
        let (w, span) = self.word(&format!("a number after `{key}`"))?;
        parse_number(w).ok_or_else(|| {
            ParseDiagnostic::error(
                DiagCode::BadNumber,
                format!("`{w}` is not a decimal number >= 0"),
                span,
            )
        })
    }

    fn keyword(&mut self, key: &str, known: &[&str]) -> LineResult {
        match self.next() {
            Some(Token {
                kind: TokenKind::Word(w),
                ..
            }) if w == key => Ok(()),
            Some(t @ Token {
                kind: TokenKind::Word(w),
                ..
            }) => {
                let code = if known.contains(&w.as_str()) {
                    DiagCode::KeyOrder
                } else {
                    DiagCode::UnknownKey
                };
                Err(ParseDiagnostic::error(
                    code,
                    format!("expected `{key}`, found `{w}`"),
                    t.span,
                ))
            }
            Some(t) => Err(ParseDiagnostic::error(
                DiagCode::Expected,
                format!("expected `{key}`, found {}", t.describe()),
                t.span,
            )),
            None => Err(self.missing(&format!("`{key}`"))),
        }
    }

    /// Walks trailing `key value` clauses, which must follow `order`.
    /// Returns the index into `order` of the next clause and its span.
    fn clause(&mut self, order: &[&str], last: &mut Option<usize>) -> LineResult<Option<usize>> {
        let Some(tok) = self.next() else {
            return Ok(None);
        };
        let TokenKind::Word(w) = &tok.kind else {
            return Err(ParseDiagnostic::error(
                DiagCode::UnexpectedToken,
                format!("unexpected {}", tok.describe()),
                tok.span,
            ));
        };
        let Some(idx) = order.iter().position(|k| k == w) else {
            return Err(ParseDiagnostic::error(
                DiagCode::UnknownKey,
                format!("unknown key `{w}`; expected one of {}", order.join(", ")),
                tok.span,
            ));
        };
        if last.is_some_and(|l| idx <= l) {
            return Err(ParseDiagnostic::error(
                DiagCode::KeyOrder,
                format!(
                    "`{w}` is repeated or out of order; keys go in the order {}",
                    order.join(", ")
                ),
                tok.span,
            ));
        }
        *last = Some(idx);
        Ok(Some(idx))
    }
}

pub(crate) fn parse_number(w: &str) -> Option<f64> {
    let (int, frac) = match w.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (w, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    w.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_ident(w: &str) -> bool {
    !w.is_empty()
        && w.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

impl Parser {
    fn statement(&mut self, line: &Line) -> LineResult {
        let first = &line.tokens[0];
        let TokenKind::Word(head) = &first.kind else {
            return Err(ParseDiagnostic::error(
                DiagCode::UnexpectedToken,
                "a line must start with a keyword, not a string",
                first.span,
            ));
        };
        let expected_indent = match head.as_str() {
            "scale" | "category" => 0,
            "indicator" => 2,
            "desc" => 4,
            other => {
                return Err(ParseDiagnostic::error(
                    DiagCode::UnknownKey,
                    format!("unknown statement `{other}`; expected scale, category, indicator or desc"),
                    first.span,
                ))
            }
        };

        if head != "scale" && self.header.is_none() && !self.reported_missing_header {
            self.reported_missing_header = true;
            self.diags.push(ParseDiagnostic::error(
                DiagCode::MissingHeader,
                "file must start with a `scale \"name\" kind ...` header",
                first.span,
            ));
        }

        if head == "indicator" && matches!(self.block, Block::None) {
            return Err(ParseDiagnostic::error(
                DiagCode::IndicatorOutsideCategory,
                "indicator appears before any category",
                first.span,
            ));
        }
        if line.indent != expected_indent {
            return Err(ParseDiagnostic::error(
                DiagCode::BadIndent,
                format!(
                    "`{head}` must be indented by {expected_indent} spaces, found {}",
                    line.indent
                ),
                SourceSpan::new(line.number, 1, line.indent.max(1)),
            ));
        }

        match head.as_str() {
            "scale" => self.header_line(line),
            "category" => self.category_line(line),
            "indicator" => {
                let r = self.indicator_line(line);
                self.indicator_broken = r.is_err();
                r
            }
            _ => self.desc_line(line),
        }
    }

    fn header_line(&mut self, line: &Line) -> LineResult {
        if self.header.is_some() {
            return Err(ParseDiagnostic::error(
                DiagCode::DuplicateHeader,
                "a file has exactly one `scale` header",
                line.tokens[0].span,
            ));
        }
        let first_statement = !self.saw_statement;
        if first_statement {
            // a malformed header still counts as the header
            self.reported_missing_header = true;
        } else if !self.reported_missing_header {
            self.reported_missing_header = true;
            return Err(ParseDiagnostic::error(
                DiagCode::MissingHeader,
                "the `scale` header must be the first statement",
                line.tokens[0].span,
            ));
        }
        let keys = ["kind", "weighting"];
        let mut c = Cursor::new(line);
        let name = c.string("the scale name")?;
        c.keyword("kind", &keys)?;
        let (k, kspan) = c.word("a scale kind")?;
        let kind = match k {
            "general" => ScaleKind::General,
            "service" => ScaleKind::Service,
            other => {
                return Err(ParseDiagnostic::error(
                    DiagCode::UnknownKind,
                    format!("unknown scale kind `{other}`; expected general or service"),
                    kspan,
                ))
            }
        };
        let mut mode = WeightingMode::Flat;
        let mut last = Some(0);
        if c.clause(&keys, &mut last)?.is_some() {
            let (m, mspan) = c.word("a weighting mode")?;
            mode = match m {
                "flat" => WeightingMode::Flat,
                "hierarchical" => WeightingMode::Hierarchical,
                other => {
                    return Err(ParseDiagnostic::error(
                        DiagCode::UnknownWeighting,
                        format!("unknown weighting `{other}`; expected flat or hierarchical"),
                        mspan,
                    ))
                }
            };
            if let Some(t) = c.peek() {
                return Err(ParseDiagnostic::error(
                    DiagCode::UnexpectedToken,
                    format!("unexpected {} after the header", t.describe()),
                    t.span,
                ));
            }
        }
        self.header = Some(Header {
            name,
            kind,
            mode,
            span: line_span(line),
        });
        Ok(())
    }

    fn category_line(&mut self, line: &Line) -> LineResult {
        self.block = Block::Broken;
        self.indicator_broken = false;
        self.current_indicator = None;
        let mut c = Cursor::new(line);
        let (r, rspan) = c.word("a category role")?;
        let role = Role::parse(r).ok_or_else(|| {
            ParseDiagnostic::error(
                DiagCode::UnknownRole,
                format!("unknown role `{r}`; expected acquisition, mastery, innovation or feedback"),
                rspan,
            )
        })?;
        let name = c.string("the category name")?;
        let mut weight = None;
        let mut last = None;
        if c.clause(&["weight"], &mut last)?.is_some() {
            weight = Some(c.number("weight")?);
            c.clause(&["weight"], &mut last)?;
        }
        if self.categories.iter().any(|n| n.category.role == role) {
            return Err(ParseDiagnostic::error(
                DiagCode::DuplicateCategory,
                format!("category {role} is declared more than once"),
                rspan,
            ));
        }
        self.categories.push(CategoryNode {
            category: Category {
                role,
                name,
                weight,
                indicators: Vec::new(),
            },
            span: line_span(line),
            indicator_spans: Vec::new(),
        });
        self.block = Block::Category(self.categories.len() - 1);
        Ok(())
    }

    fn indicator_line(&mut self, line: &Line) -> LineResult {
        self.current_indicator = None;
        let mut c = Cursor::new(line);
        let (id, id_span) = c.word("an indicator id")?;
        if !is_ident(id) {
            return Err(ParseDiagnostic::error(
                DiagCode::BadIdent,
                format!("indicator id `{id}` must match [a-z0-9_-]+"),
                id_span,
            ));
        }
        let name = c.string("the indicator name")?;
        let mut ind = Indicator::new(id, name);
        let order = ["weight", "max", "slot"];
        let mut last = None;
        while let Some(idx) = c.clause(&order, &mut last)? {
            match idx {
                0 => ind.weight = c.number("weight")?,
                1 => ind.max_score = c.number("max")?,
                _ => {
                    let (s, sspan) = c.word("an extension slot")?;
                    ind.extension_slot = Some(ExtensionSlot::parse(s).ok_or_else(|| {
                        ParseDiagnostic::error(
                            DiagCode::UnknownSlot,
                            format!(
                                "unknown slot `{s}`; expected other_input, professional_knowledge, professional_innovation or other_output"
                            ),
                            sspan,
                        )
                    })?);
                }
            }
        }

        if let Block::Category(ci) = self.block {
            let node = &mut self.categories[ci];
            node.category.indicators.push(ind);
            node.indicator_spans.push(line_span(line));
            self.current_indicator = Some((ci, node.category.indicators.len() - 1, false));
        }
        Ok(())
    }

    fn desc_line(&mut self, line: &Line) -> LineResult {
        let mut c = Cursor::new(line);
        let text = c.string("the description")?;
        if let Some(t) = c.peek() {
            return Err(ParseDiagnostic::error(
                DiagCode::UnexpectedToken,
                format!("unexpected {} after the description", t.describe()),
                t.span,
            ));
        }
        match &mut self.current_indicator {
            None if self.indicator_broken || matches!(self.block, Block::Broken) => Ok(()),
            None => Err(ParseDiagnostic::error(
                DiagCode::DescWithoutIndicator,
                "`desc` must directly follow an indicator line",
                line.tokens[0].span,
            )),
            Some((_, _, true)) => Err(ParseDiagnostic::error(
                DiagCode::DuplicateDesc,
                "indicator already has a description",
                line.tokens[0].span,
            )),
            Some((ci, ii, seen)) => {
                *seen = true;
                self.categories[*ci].category.indicators[*ii].description = text;
                Ok(())
            }
        }
    }

    fn finish(mut self) -> Parsed {
        if !self.saw_statement {
            self.diags.push(ParseDiagnostic::error(
                DiagCode::Empty,
                "input contains no statements",
                SourceSpan::new(1, 1, 0),
            ));
        }
        if self.diags.iter().any(ParseDiagnostic::is_error) {
            return self.fail();
        }
        let Some(header) = self.header.take() else {
            // statements existed, so MissingHeader has been reported
            return self.fail();
        };

        let present: HashSet<Role> = self.categories.iter().map(|n| n.category.role).collect();
        let missing: Vec<&str> = Role::ALL
            .iter()
            .filter(|r| !present.contains(r))
            .map(|r| r.as_str())
            .collect();
        if !missing.is_empty() {
            self.diags.push(ParseDiagnostic::error(
                DiagCode::MissingCategory,
                format!("missing category role(s): {}", missing.join(", ")),
                SourceSpan::new(self.last_content_line, 1, 0),
            ));
            return self.fail();
        }

        let scale = Scale {
            id: slugify(&header.name),
            name: header.name,
            kind: header.kind,
            weighting_mode: header.mode,
            categories: self.categories.iter().map(|n| n.category.clone()).collect(),
        };
        for v in validate_scale(&scale) {
            let span = self.span_for_path(&v.path, header.span);
            let code = match v.code {
                ViolationCode::CategoryOrder => DiagCode::CategoryOrder,
                ViolationCode::EmptyCategory => DiagCode::EmptyCategory,
                ViolationCode::DuplicateId => DiagCode::DuplicateId,
                ViolationCode::WeightSum => DiagCode::WeightSum,
                ViolationCode::CategoryWeightInFlat => DiagCode::CategoryWeightInFlat,
                ViolationCode::MissingCategoryWeight => DiagCode::MissingCategoryWeight,
                ViolationCode::NonpositiveMax => DiagCode::NonpositiveMax,
                ViolationCode::SlotMismatch => DiagCode::SlotMismatch,
                ViolationCode::CategoryCount
                | ViolationCode::EmptyId
                | ViolationCode::NegativeWeight => DiagCode::InvalidScale,
            };
            self.diags.push(ParseDiagnostic::error(code, v.message, span));
        }
        if self.diags.iter().any(ParseDiagnostic::is_error) {
            return self.fail();
        }

        if scale.weighting_mode == WeightingMode::Flat {
            for (node, cat) in self.categories.iter().zip(&scale.categories) {
                for (span, ind) in node.indicator_spans.iter().zip(&cat.indicators) {
                    if ind.weight == 0.0 {
                        self.diags.push(ParseDiagnostic::warning(
                            DiagCode::ZeroWeight,
                            format!("indicator {} has weight 0 and never affects the quotient", ind.id),
                            *span,
                        ));
                    }
                }
            }
        }
        Parsed {
            scale: Some(scale),
            diagnostics: self.diags,
        }
    }

    fn fail(self) -> Parsed {
        Parsed {
            scale: None,
            diagnostics: self.diags,
        }
    }

    fn span_for_path(&self, path: &str, header: SourceSpan) -> SourceSpan {
        let index = |s: &str| -> Option<usize> {
            s.split_once('[')?.1.strip_suffix(']')?.parse().ok()
        };
        let mut parts = path.split('/');
        let Some(ci) = parts.next().and_then(index) else {
            return header;
        };
        let Some(node) = self.categories.get(ci) else {
            return header;
        };
        match parts.next().and_then(index) {
            Some(ii) => node.indicator_spans.get(ii).copied().unwrap_or(node.span),
            None => node.span,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"# minimal
scale "Mini" kind service weighting flat
category acquisition "A"
  indicator a1 "A one" weight 2 max 10 slot other_input
    desc "first"
category mastery "M"
  indicator m1 "M one"
category innovation "I"
  indicator i1 "I one" weight 0.5
category feedback "F"
  indicator f1 "F one" slot other_output
"#;

    fn codes(text: &str) -> Vec<(DiagCode, usize)> {
        parse(text)
            .diagnostics
            .iter()
            .filter(|d| d.is_error())
            .map(|d| (d.code, d.span.line))
            .collect()
    }

    #[test]
    fn parses_minimal_scale() {
        let s = parse_scale(MINIMAL).unwrap();
        assert_eq!(s.id, "mini");
        assert_eq!(s.kind, ScaleKind::Service);
        assert_eq!(s.categories.len(), 4);
        let a1 = &s.categories[0].indicators[0];
        assert_eq!(a1.weight, 2.0);
        assert_eq!(a1.max_score, 10.0);
        assert_eq!(a1.extension_slot, Some(ExtensionSlot::OtherInput));
        assert_eq!(a1.description, "first");
        assert_eq!(s.categories[1].indicators[0].weight, 1.0);
    }

    #[test]
    fn bundled_general_parses_with_four_categories() {
        let s = parse_scale(crate::bundled::GENERAL_2017).unwrap();
        assert_eq!(s.categories.len(), 4);
        assert_eq!(s.kind, ScaleKind::General);
    }

    #[test]
    fn empty_input() {
        let d = parse("").diagnostics;
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, DiagCode::Empty);
        assert_eq!((d[0].span.line, d[0].span.column), (1, 1));
        assert_eq!(codes("# only a comment\n\n"), vec![(DiagCode::Empty, 1)]);
    }

    #[test]
    fn zero_weights_are_weight_sum() {
        let text = MINIMAL
            .replace("weight 2", "weight 0")
            .replace("weight 0.5", "weight 0")
            .replace("\"M one\"", "\"M one\" weight 0")
            .replace("\"F one\"", "\"F one\" weight 0");
        let d = parse(&text).diagnostics;
        let ws = d.iter().find(|d| d.code == DiagCode::WeightSum).unwrap();
        assert_eq!(ws.span.line, 2);
        assert!(ws.message.contains("sum to 0"));
    }

    #[test]
    fn indicator_before_category() {
        let text = "scale \"x\" kind general\n  indicator a \"A\"\n";
        assert_eq!(codes(text)[0], (DiagCode::IndicatorOutsideCategory, 2));
    }

    #[test]
    fn missing_category_role() {
        let text: String = MINIMAL.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert_eq!(codes(&text), vec![(DiagCode::MissingCategory, 9)]);
    }

    #[test]
    fn key_order_and_unknown_keys() {
        let t = MINIMAL.replace("weight 2 max 10", "max 10 weight 2");
        assert_eq!(codes(&t), vec![(DiagCode::KeyOrder, 4)]);
        let t = MINIMAL.replace("weight 2 max 10", "weigth 2");
        assert_eq!(codes(&t), vec![(DiagCode::UnknownKey, 4)]);
        let t = MINIMAL.replace("kind service weighting flat", "weighting flat kind service");
        assert_eq!(codes(&t), vec![(DiagCode::KeyOrder, 2)]);
    }

    #[test]
    fn errors_on_several_lines_are_all_reported() {
        let t = MINIMAL
            .replace("indicator m1", "indicator M1")
            .replace("weight 0.5", "weight 0.5.1");
        assert_eq!(
            codes(&t),
            vec![(DiagCode::BadIdent, 7), (DiagCode::BadNumber, 9)]
        );
    }

    #[test]
    fn semantic_errors_point_at_the_indicator() {
        let t = MINIMAL.replace("indicator i1", "indicator a1");
        assert_eq!(codes(&t), vec![(DiagCode::DuplicateId, 9)]);
        let t = MINIMAL.replace("slot other_output", "slot other_input");
        assert_eq!(codes(&t), vec![(DiagCode::SlotMismatch, 11)]);
    }

    #[test]
    fn zero_weight_warns_but_parses() {
        let t = MINIMAL.replace("weight 0.5", "weight 0");
        let p = parse(&t);
        assert!(p.scale.is_some());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].severity, super::super::Severity::Warning);
    }

    #[test]
    fn number_grammar() {
        assert_eq!(parse_number("0"), Some(0.0));
        assert_eq!(parse_number("0.250000000"), Some(0.25));
        for bad in ["-1", "1.", ".5", "1e3", "1.2.3", ""] {
            assert_eq!(parse_number(bad), None, "{bad}");
        }
    }
}
