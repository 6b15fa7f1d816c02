//! Specification corpus construction: text sanitation, clause segmentation,
//! and cross-reference detection.
//!
//! Raw specification text (already extracted to plain text) is normalized by
//! [`sanitize`], cut into a clause tree of sentences by [`segment`], and every
//! sentence is annotated with the clause references it carries via
//! [`detect_references`]. Reference phrases such as
//! `as specified in subclause 5.5.1.3.2` survive sanitation untouched; they
//! drive the reference-guided candidate scoping in the linking stage.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A reference from a sentence to a clause, possibly in another specification.
///
/// `target_clause` is the dotted clause number; it is empty when the reference
/// names a whole specification (`TS 24.501` with no subclause). `source_span`
/// is the byte range of the full reference phrase within the owning sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClauseRef {
    pub target_clause: String,
    pub target_spec: Option<String>,
    pub source_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: u64,
    pub text: String,
    pub references: Vec<ClauseRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub clause_id: String,
    pub title: String,
    pub sentences: Vec<Sentence>,
    pub children: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub spec_id: String,
    pub version: String,
    pub clauses: Vec<Clause>,
}

/// One corpus record, as written to the corpus store (one line per sentence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub spec_id: String,
    pub clause_id: String,
    pub sentence_id: u64,
    pub text: String,
    pub references: Vec<ClauseRef>,
}

/// Diagnostics produced while segmenting; segmentation always continues.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentWarning {
    /// A heading's dotted number has no valid parent chain; the clause was
    /// attached to the nearest existing ancestor (or the document root).
    MalformedHeading {
        line: usize,
        clause_id: String,
        attached_to: Option<String>,
    },
    /// A heading repeats an already-seen clause id; its body is appended to
    /// the existing clause.
    DuplicateClause { line: usize, clause_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub document: SpecDocument,
    pub warnings: Vec<SegmentWarning>,
    /// Lines before the first recognizable heading (front matter) are skipped.
    pub skipped_preamble_lines: usize,
}

static CAPTION_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^(?:table|figure)\s+\d[\d.a-z-]*\s*(?::.*)?$").unwrap());

/// Reference phrases. Branch order matters: a `TS nn.nnn subclause X` phrase
/// must win over the bare clause branch at the same position.
static REFERENCE_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?ix)
        \bTS\s+(?P<spec>\d{2}\.\d{3})
            (?:\s*,?\s+(?:as\s+specified\s+in\s+)?(?:sub)?clause\s+(?P<tsclause>\d+(?:\.\d+)*))?
      | \b(?:(?:as\s+specified\s+in|specified\s+in|in|see)\s+)?(?:sub)?clauses?\s+(?P<clause>\d+(?:\.\d+)*)
        ",
    )
    .unwrap()
});

/// Number of reference-phrase matches in `text`. The pattern tolerates any
/// whitespace between words, so counts agree between raw and sanitized text.
pub fn count_reference_phrases(text: &str) -> usize {
    REFERENCE_RE.find_iter(text).count()
}

/// Returns every clause reference in `sentence_text`, left to right, with
/// non-overlapping source spans (longest phrase wins at each position).
pub fn detect_references(sentence_text: &str) -> Vec<ClauseRef> {
    REFERENCE_RE
        .captures_iter(sentence_text)
        .map(|caps| {
            let m = caps.get(0).unwrap();
            if let Some(spec) = caps.name("spec") {
                ClauseRef {
                    target_clause: caps
                        .name("tsclause")
                        .map(|c| c.as_str().to_string())
                        .unwrap_or_default(),
                    target_spec: Some(format!("TS {}", spec.as_str())),
                    source_span: (m.start(), m.end()),
                }
            } else {
                ClauseRef {
                    target_clause: caps.name("clause").unwrap().as_str().to_string(),
                    target_spec: None,
                    source_span: (m.start(), m.end()),
                }
            }
        })
        .collect()
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn remove_empty_parens(s: &str) -> String {
    static EMPTY_PARENS_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\(\s*\)").unwrap());
    let mut cur = s.to_string();
    loop {
        let next = EMPTY_PARENS_RE.replace_all(&cur, " ").into_owned();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn strip_leading_bullets(s: &str) -> (&str, bool) {
    let mut rest = s;
    let mut was_bullet = false;
    loop {
        let trimmed = rest.trim_start();
        match trimmed.chars().next() {
            Some('-') | Some('*') | Some('.') => {
                was_bullet = true;
                rest = &trimmed[1..];
            }
            _ => return (trimmed, was_bullet),
        }
    }
}

fn trim_trailing_list_punct(s: &str) -> &str {
    s.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, ';' | ':' | ',' | '.'))
}

fn sanitize_pass(raw: &str) -> String {
    let normalized = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut kept: Vec<String> = Vec::new();
    for line in normalized.split('\n') {
        // Keep printable ASCII only; tabs survive to this point so table rows
        // can still be recognized, pipes are removed right after the check.
        let filtered: String = line
            .chars()
            .filter(|&c| c == '\t' || (' '..='~').contains(&c))
            .collect();
        let separators = filtered.chars().filter(|&c| c == '|' || c == '\t').count();
        if separators >= 3 {
            continue;
        }
        let no_pipes = filtered.replace('|', " ");
        let no_parens = remove_empty_parens(&no_pipes);
        let collapsed = collapse_ws(&no_parens);
        let (stripped, was_bullet) = strip_leading_bullets(&collapsed);
        let line_text = if was_bullet {
            trim_trailing_list_punct(stripped)
        } else {
            stripped
        };
        if line_text.is_empty() || CAPTION_RE.is_match(line_text) {
            continue;
        }
        kept.push(line_text.to_string());
    }
    collapse_ws(&remove_empty_parens(&kept.join(" ")))
}

/// Normalizes raw specification text: collapses whitespace and line breaks,
/// strips leading bullet symbols, trims trailing punctuation of list
/// fragments, removes empty parentheses and non-ASCII characters, and drops
/// table/figure residue lines. Reference phrases pass through unchanged.
///
/// Removing characters can expose structure for the earlier rules (for
/// example a caption split by a dropped table bar), so the pass reruns until
/// it reaches a fixed point; the result is idempotent by construction.
pub fn sanitize(raw_text: &str) -> String {
    let mut cur = sanitize_pass(raw_text);
    loop {
        let next = sanitize_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

const NO_SPLIT_ABBREVIATIONS: &[&str] = &[
    "i.e", "e.g", "etc", "cf", "vs", "fig", "rel", "resp", "approx",
];

static DOTTED_NUMBER_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\d+(\.\d+)*$").unwrap());

/// Splits sanitized text into sentences on `. `, `! `, `? `, keeping known
/// abbreviations and dotted clause numbers (`subclause 5.4.`) intact.
pub fn split_sentences(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    for i in 0..bytes.len() {
        let c = bytes[i] as char;
        if !matches!(c, '.' | '!' | '?') || i + 1 >= bytes.len() || bytes[i + 1] != b' ' {
            continue;
        }
        if c == '.' {
            let token_start = text[..i].rfind(' ').map(|p| p + 1).unwrap_or(0);
            let token = text[token_start..i].trim_start_matches(|c: char| !c.is_alphanumeric());
            let lower = token.to_lowercase();
            if NO_SPLIT_ABBREVIATIONS.contains(&lower.as_str())
                || DOTTED_NUMBER_RE.is_match(token)
            {
                continue;
            }
        }
        let sentence = text[start..=i].trim();
        if !sentence.is_empty() {
            sentences.push(sentence.to_string());
        }
        start = i + 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

static HEADING_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*(\d+(?:\.\d+)*)(?:\s+(\S.*?))?\s*$").unwrap());

/// A heading is a dotted number followed by a title that starts with an
/// uppercase letter or digit and does not end in sentence punctuation, or a
/// bare dotted number with at least one dot. Body lines that merely begin
/// with a clause number ("5.4.1 applies to ...") stay body text.
fn parse_heading(line: &str) -> Option<(String, String)> {
    let caps = HEADING_RE.captures(line)?;
    let number = caps.get(1).unwrap().as_str().to_string();
    match caps.get(2) {
        Some(title) => {
            let title = title.as_str().trim();
            let first = title.chars().next().unwrap();
            if title.ends_with(['.', ';', ':', ','])
                || !(first.is_ascii_uppercase() || first.is_ascii_digit())
            {
                return None;
            }
            Some((number, title.to_string()))
        }
        None => {
            if number.contains('.') {
                Some((number, String::new()))
            } else {
                None
            }
        }
    }
}

fn parent_of(clause_id: &str) -> Option<&str> {
    clause_id.rfind('.').map(|p| &clause_id[..p])
}

/// Segments a plain-text specification into a clause tree of sanitized,
/// reference-annotated sentences. Sentence ids are document-wide and strictly
/// increasing in document order. Malformed headings are reported as warnings
/// and attached to the nearest existing ancestor.
pub fn segment(spec_id: &str, raw_document: &str) -> SegmentOutcome {
    struct Pending {
        clause_id: String,
        title: String,
        body: Vec<String>,
        line: usize,
    }

    let normalized = raw_document.replace("\r\n", "\n").replace('\r', "\n");
    let mut pending: Vec<Pending> = Vec::new();
    let mut current: Option<Pending> = None;
    let mut skipped_preamble_lines = 0usize;

    for (idx, line) in normalized.split('\n').enumerate() {
        if let Some((clause_id, title)) = parse_heading(line) {
            if let Some(done) = current.take() {
                pending.push(done);
            }
            current = Some(Pending {
                clause_id,
                title,
                body: Vec::new(),
                line: idx + 1,
            });
        } else if let Some(cur) = current.as_mut() {
            cur.body.push(line.to_string());
        } else if !line.trim().is_empty() {
            skipped_preamble_lines += 1;
        }
    }
    if let Some(done) = current.take() {
        pending.push(done);
    }

    // Flat arena keyed by clause id; the tree is rebuilt at the end so that
    // out-of-order headings can attach to any already-seen ancestor.
    let mut arena: std::collections::HashMap<String, Clause> = std::collections::HashMap::new();
    let mut attach_to: Vec<(String, Option<String>)> = Vec::new();
    let mut warnings = Vec::new();
    let mut next_sentence_id = 1u64;

    for p in pending {
        let mut sentences = Vec::new();
        for text in split_sentences(&sanitize(&p.body.join("\n"))) {
            let references = detect_references(&text);
            sentences.push(Sentence {
                sentence_id: next_sentence_id,
                text,
                references,
            });
            next_sentence_id += 1;
        }

        if let Some(existing) = arena.get_mut(&p.clause_id) {
            warnings.push(SegmentWarning::DuplicateClause {
                line: p.line,
                clause_id: p.clause_id.clone(),
            });
            existing.sentences.extend(sentences);
            continue;
        }

        let parent = match parent_of(&p.clause_id) {
            None => None,
            Some(direct) if arena.contains_key(direct) => Some(direct.to_string()),
            Some(direct) => {
                // Walk up the dotted prefix chain for the nearest seen clause.
                let mut anc = parent_of(direct);
                while let Some(a) = anc {
                    if arena.contains_key(a) {
                        break;
                    }
                    anc = parent_of(a);
                }
                let attached = anc.map(|a| a.to_string());
                warnings.push(SegmentWarning::MalformedHeading {
                    line: p.line,
                    clause_id: p.clause_id.clone(),
                    attached_to: attached.clone(),
                });
                attached
            }
        };

        attach_to.push((p.clause_id.clone(), parent));
        arena.insert(
            p.clause_id.clone(),
            Clause {
                clause_id: p.clause_id,
                title: p.title,
                sentences,
                children: Vec::new(),
            },
        );
    }

    let mut roots: Vec<String> = Vec::new();
    let mut children_of: std::collections::HashMap<String, Vec<String>> =
        std::collections::HashMap::new();
    for (id, parent) in attach_to {
        match parent {
            Some(p) => children_of.entry(p).or_default().push(id),
            None => roots.push(id),
        }
    }

    fn build(
        id: &str,
        arena: &mut std::collections::HashMap<String, Clause>,
        children_of: &std::collections::HashMap<String, Vec<String>>,
    ) -> Clause {
        let mut clause = arena.remove(id).expect("clause present in arena");
        if let Some(kids) = children_of.get(id) {
            for kid in kids {
                clause.children.push(build(kid, arena, children_of));
            }
        }
        clause
    }

    let clauses = roots
        .iter()
        .map(|id| build(id, &mut arena, &children_of))
        .collect();

    SegmentOutcome {
        document: SpecDocument {
            spec_id: spec_id.to_string(),
            version: String::new(),
            clauses,
        },
        warnings,
        skipped_preamble_lines,
    }
}

impl SpecDocument {
    /// Depth-first walk yielding `(clause, sentence)` in document order.
    pub fn iter_sentences(&self) -> impl Iterator<Item = (&Clause, &Sentence)> {
        fn walk<'a>(clause: &'a Clause, out: &mut Vec<(&'a Clause, &'a Sentence)>) {
            for s in &clause.sentences {
                out.push((clause, s));
            }
            for c in &clause.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        for c in &self.clauses {
            walk(c, &mut out);
        }
        out.into_iter()
    }

    pub fn iter_clauses(&self) -> impl Iterator<Item = &Clause> {
        fn walk<'a>(clause: &'a Clause, out: &mut Vec<&'a Clause>) {
            out.push(clause);
            for c in &clause.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        for c in &self.clauses {
            walk(c, &mut out);
        }
        out.into_iter()
    }

    /// The corpus record stream in document order. Tree order and document
    /// order agree unless a duplicate heading forced a body merge, so records
    /// are ordered by sentence id, which is the document order by
    /// construction.
    pub fn to_records(&self) -> Vec<SentenceRecord> {
        let mut records: Vec<SentenceRecord> = self
            .iter_sentences()
            .map(|(clause, s)| SentenceRecord {
                spec_id: self.spec_id.clone(),
                clause_id: clause.clause_id.clone(),
                sentence_id: s.sentence_id,
                text: s.text.clone(),
                references: s.references.clone(),
            })
            .collect();
        records.sort_by_key(|r| r.sentence_id);
        records
    }
}

/// Clause-id lookup used for reference resolution. Built from the clause ids
/// present in the corpus; ancestor clauses that carry no sentences of their
/// own are still resolvable through the dotted-prefix relation.
#[derive(Debug, Clone, Default)]
pub struct ClauseTree {
    ids: BTreeSet<String>,
}

impl ClauseTree {
    pub fn from_ids<I: IntoIterator<Item = String>>(ids: I) -> Self {
        Self {
            ids: ids.into_iter().collect(),
        }
    }

    /// True when the clause exists either as a recorded id or as an ancestor
    /// of one.
    pub fn contains(&self, clause_id: &str) -> bool {
        if clause_id.is_empty() {
            return false;
        }
        if self.ids.contains(clause_id) {
            return true;
        }
        let prefix = format!("{clause_id}.");
        self.ids
            .range(prefix.clone()..)
            .next()
            .is_some_and(|id| id.starts_with(&prefix))
    }

    /// True when `clause_id` equals `target` or is a descendant of it.
    pub fn is_within(clause_id: &str, target: &str) -> bool {
        clause_id == target
            || (clause_id.len() > target.len()
                && clause_id.starts_with(target)
                && clause_id.as_bytes()[target.len()] == b'.')
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_collapse() {
        assert_eq!(sanitize("  The UE   shall send it.\n\n"), "The UE shall send it.");
    }

    #[test]
    fn bullet_and_empty_parens() {
        // Hand-applied rules (a)+(c): bullet stripped, empty parens removed,
        // trailing list punctuation trimmed.
        assert_eq!(sanitize("- shall stop timer T3540 ()"), "shall stop timer T3540");
    }

    #[test]
    fn reference_phrase_passes_through() {
        let text = "processed as specified in subclause 5.4.";
        assert_eq!(sanitize(text), text);
    }

    #[test]
    fn table_and_caption_lines_dropped() {
        let raw = "The UE shall proceed.\nTable 5.4.1-1: Transition summary\n| a | b | c |\ncol1\tcol2\tcol3\tcol4\nNext sentence here.";
        assert_eq!(sanitize(raw), "The UE shall proceed. Next sentence here.");
    }

    #[test]
    fn special_unicode_dropped_not_transliterated() {
        assert_eq!(sanitize("UE \u{2192} AMF \u{25cf} done"), "UE AMF done");
    }

    #[test]
    fn caption_with_body_text_is_kept() {
        let s = "Table 5 shows the transitions in use.";
        assert_eq!(sanitize(s), s);
    }

    #[test]
    fn trailing_punct_trim_applies_only_to_list_fragments() {
        assert_eq!(sanitize("- supports emergency services;"), "supports emergency services");
        assert_eq!(sanitize("The UE shall proceed."), "The UE shall proceed.");
    }

    #[test]
    fn sanitize_idempotent_on_awkward_inputs() {
        let cases = [
            "Table ( \n ) 5: x",
            "(\u{25cf})- foo",
            "- Table 5;;",
            "a | b\nc | d",
            "-.() keep this",
            "see\n|a|b|c|d\nsubclause 5.4",
        ];
        for case in cases {
            let once = sanitize(case);
            assert_eq!(sanitize(&once), once, "not idempotent on {case:?}");
        }
    }

    #[test]
    fn detect_reference_subclause() {
        let refs = detect_references("respond to the procedure as specified in subclause 5.4");
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].target_clause, "5.4");
        assert_eq!(refs[0].target_spec, None);
        let (s, e) = refs[0].source_span;
        assert_eq!(&"respond to the procedure as specified in subclause 5.4"[s..e],
                   "as specified in subclause 5.4");
    }

    #[test]
    fn detect_reference_deep_clause() {
        let refs = detect_references("the registration procedure in subclause 5.5.1.3.2");
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].target_clause, "5.5.1.3.2");
    }

    #[test]
    fn detect_reference_none() {
        assert!(detect_references("The UE shall stop timer T3540").is_empty());
    }

    #[test]
    fn detect_reference_cross_spec() {
        let refs = detect_references("as specified in TS 24.301, subclause 4.4.4.3 the MME acts");
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].target_spec.as_deref(), Some("TS 24.301"));
        assert_eq!(refs[0].target_clause, "4.4.4.3");

        let bare = detect_references("see TS 38.331 for the RRC side");
        assert_eq!(bare.len(), 1);
        assert_eq!(bare[0].target_spec.as_deref(), Some("TS 38.331"));
        assert_eq!(bare[0].target_clause, "");
    }

    #[test]
    fn subclause_word_does_not_match_bare_clause_pattern() {
        // "subclause" must not be matched as "clause" mid-word; the full
        // phrase wins instead.
        let refs = detect_references("see subclause 5.4");
        assert_eq!(refs.len(), 1);
        let (s, _) = refs[0].source_span;
        assert_eq!(s, 0);
    }

    #[test]
    fn sentence_split_keeps_abbreviations_and_clause_numbers() {
        let sentences = split_sentences(
            "The UE applies the rules, e.g. timers. It proceeds per subclause 5.4. No reply is sent! Done?",
        );
        assert_eq!(
            sentences,
            vec![
                "The UE applies the rules, e.g. timers.".to_string(),
                "It proceeds per subclause 5.4. No reply is sent!".to_string(),
                "Done?".to_string(),
            ]
        );
    }

    #[test]
    fn segment_builds_hierarchy_by_prefix() {
        let doc = "5\tGeneral\nBody one.\n5.4\tCommon\nBody two.\n5.5\tRegistration\nBody three.";
        let outcome = segment("TS 24.501", doc);
        assert!(outcome.warnings.is_empty());
        let doc = outcome.document;
        assert_eq!(doc.clauses.len(), 1);
        assert_eq!(doc.clauses[0].clause_id, "5");
        let kids: Vec<_> = doc.clauses[0].children.iter().map(|c| c.clause_id.as_str()).collect();
        assert_eq!(kids, vec!["5.4", "5.5"]);
    }

    #[test]
    fn segment_empty_document() {
        let outcome = segment("TS 24.501", "");
        assert!(outcome.document.clauses.is_empty());
        assert_eq!(outcome.skipped_preamble_lines, 0);
    }

    #[test]
    fn segment_two_sentence_clause_gets_consecutive_ids() {
        // Five-line fixture, counts verified by hand: one clause, two
        // sentences with ids 1 and 2.
        let doc = "5.1\tScope\nFirst sentence here.\nSecond one\nfollows after a break.\n";
        let outcome = segment("TS 24.501", doc);
        let clause = &outcome.document.clauses[0];
        assert_eq!(clause.sentences.len(), 2);
        assert_eq!(clause.sentences[0].sentence_id, 1);
        assert_eq!(clause.sentences[1].sentence_id, 2);
        assert_eq!(clause.sentences[1].text, "Second one follows after a break.");
    }

    #[test]
    fn segment_malformed_heading_attaches_to_nearest_ancestor() {
        let doc = "5\tGeneral\n5.5.1\tOrphaned\nBody.\n";
        let outcome = segment("TS 24.501", doc);
        assert_eq!(
            outcome.warnings,
            vec![SegmentWarning::MalformedHeading {
                line: 2,
                clause_id: "5.5.1".to_string(),
                attached_to: Some("5".to_string()),
            }]
        );
        assert_eq!(outcome.document.clauses[0].children[0].clause_id, "5.5.1");
    }

    #[test]
    fn segment_body_line_starting_with_number_is_not_heading() {
        let doc = "5\tGeneral\n5.4.1 applies to the UE only.\n";
        let outcome = segment("TS 24.501", doc);
        assert_eq!(outcome.document.clauses.len(), 1);
        assert_eq!(outcome.document.clauses[0].sentences.len(), 1);
    }

    #[test]
    fn clause_tree_contains_ancestors_and_descendants() {
        let tree = ClauseTree::from_ids(["5.5.1.3.2".to_string(), "5.4.1".to_string()]);
        assert!(tree.contains("5.5"));
        assert!(tree.contains("5.5.1.3.2"));
        assert!(!tree.contains("5.55"));
        assert!(ClauseTree::is_within("5.5.1.3.2", "5.5"));
        assert!(!ClauseTree::is_within("5.55", "5.5"));
    }
}
