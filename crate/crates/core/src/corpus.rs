//! CoNLL-style treebank ingestion.
//!
//! Sentences are validated as single-rooted, acyclic, projective dependency
//! trees. Invalid sentences are skipped and recorded in an [`IngestReport`];
//! malformed lines abort parsing with the offending line number.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why a sentence was not accepted as a tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty sentence")]
    Empty,
    #[error("token numbering is not 1..n")]
    BadNumbering,
    #[error("head out of range")]
    HeadOutOfRange,
    #[error("self-loop")]
    SelfLoop,
    #[error("no root")]
    NoRoot,
    #[error("multiple roots")]
    MultipleRoots,
    #[error("cycle")]
    Cycle,
    #[error("non-projective")]
    NonProjective,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based linear position.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// 0 for the root, otherwise the 1-based index of the head.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    pub fn new(index: usize, form: &str, lemma: &str, upos: &str, head: usize, deprel: &str) -> Self {
        Self {
            index,
            form: form.to_string(),
            lemma: lemma.to_string(),
            upos: upos.to_string(),
            head,
            deprel: deprel.to_string(),
        }
    }

    /// Lemma, falling back to the surface form when the lemma column is empty.
    pub fn lemma_or_form(&self) -> &str {
        if self.lemma.is_empty() || self.lemma == "_" {
            &self.form
        } else {
            &self.lemma
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    pub sentence_id: String,
    pub doc_id: String,
    tokens: Vec<Token>,
    root: usize,
}

impl DependencyTree {
    pub fn new(
        doc_id: impl Into<String>,
        sentence_id: impl Into<String>,
        tokens: Vec<Token>,
    ) -> Result<Self, TreeError> {
        let heads = validate(&tokens)?;
        let root = heads.iter().position(|&h| h == 0).expect("validated") + 1;
        Ok(Self { sentence_id: sentence_id.into(), doc_id: doc_id.into(), tokens, root })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at 1-based position `index`.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    pub fn root(&self) -> &Token {
        self.token(self.root)
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// Dependents of `head` (0 = artificial root) in linear order.
    pub fn children(&self, head: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == head)
    }

    /// Inclusive span `(first, last)` of the subtree rooted at `index`.
    /// Contiguous because accepted trees are projective.
    pub fn subtree_span(&self, index: usize) -> (usize, usize) {
        let mut lo = index;
        let mut hi = index;
        let mut stack = vec![index];
        while let Some(n) = stack.pop() {
            for c in self.children(n) {
                lo = lo.min(c.index);
                hi = hi.max(c.index);
                stack.push(c.index);
            }
        }
        (lo, hi)
    }

    /// Tree whose linear order is `order` (old 1-based positions, new order),
    /// with heads renumbered. `order` must be a permutation of `1..=n`.
    pub fn reordered(&self, order: &[usize], sentence_id: impl Into<String>) -> Result<Self, TreeError> {
        let n = self.tokens.len();
        let mut new_pos = vec![0usize; n + 1];
        for (i, &old) in order.iter().enumerate() {
            if old == 0 || old > n || new_pos[old] != 0 {
                return Err(TreeError::BadNumbering);
            }
            new_pos[old] = i + 1;
        }
        if order.len() != n {
            return Err(TreeError::BadNumbering);
        }
        let tokens = order
            .iter()
            .enumerate()
            .map(|(i, &old)| {
                let t = self.token(old);
                Token { index: i + 1, head: if t.head == 0 { 0 } else { new_pos[t.head] }, ..t.clone() }
            })
            .collect();
        DependencyTree::new(self.doc_id.clone(), sentence_id, tokens)
    }
}

pub fn root_of(tree: &DependencyTree) -> &Token {
    tree.root()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<DependencyTree>,
}

impl Document {
    /// The sentence preceding `k`, if any.
    pub fn context_of(&self, k: usize) -> Option<&DependencyTree> {
        k.checked_sub(1).map(|i| &self.sentences[i])
    }
}

/// 0-based column positions of the fields we read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub id: usize,
    pub form: usize,
    pub lemma: usize,
    pub upos: usize,
    pub head: usize,
    pub deprel: usize,
}

impl Default for ColumnMap {
    /// CoNLL-U positions.
    fn default() -> Self {
        Self { id: 0, form: 1, lemma: 2, upos: 3, head: 6, deprel: 7 }
    }
}

impl ColumnMap {
    fn width(&self) -> usize {
        [self.id, self.form, self.lemma, self.upos, self.head, self.deprel].into_iter().max().unwrap_or(0) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestStatus {
    Accepted,
    Rejected(TreeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestEntry {
    pub sentence_id: String,
    pub status: IngestStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub entries: Vec<IngestEntry>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.entries.len()
    }

    pub fn accepted(&self) -> usize {
        self.entries.iter().filter(|e| e.status == IngestStatus::Accepted).count()
    }

    pub fn rejected(&self) -> usize {
        self.total() - self.accepted()
    }

    /// Tab-separated `(sentence_id, status, reason)` lines, no header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let (status, reason) = match &e.status {
                IngestStatus::Accepted => ("accepted", "-".to_string()),
                IngestStatus::Rejected(r) => ("rejected", r.to_string()),
            };
            out.push_str(&format!("{}\t{}\t{}\n", e.sentence_id, status, reason));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Treebank {
    pub documents: Vec<Document>,
    pub report: IngestReport,
}

impl Treebank {
    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn trees(&self) -> impl Iterator<Item = &DependencyTree> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }
}

const DEFAULT_DOC: &str = "doc";

struct PendingSentence {
    doc_id: String,
    sentence_id: Option<String>,
    tokens: Vec<Token>,
}

/// Parses tab-separated records with blank-line sentence separation and
/// `# doc_id = ..` / `# newdoc id = ..` / `# sent_id = ..` comments.
/// Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
pub fn parse_treebank<R: BufRead>(input: R, columns: &ColumnMap) -> Result<Treebank, CorpusError> {
    let mut documents: Vec<Document> = Vec::new();
    let mut report = IngestReport::default();
    let mut doc_id = DEFAULT_DOC.to_string();
    let mut pending: Option<PendingSentence> = None;
    let mut ordinal = 0usize;
    let mut pending_sent_id: Option<String> = None;

    let mut flush = |p: Option<PendingSentence>, documents: &mut Vec<Document>, report: &mut IngestReport| {
        let Some(p) = p else { return };
        ordinal += 1;
        let sentence_id = p.sentence_id.unwrap_or_else(|| format!("s{ordinal}"));
        match DependencyTree::new(p.doc_id.clone(), sentence_id.clone(), p.tokens) {
            Ok(tree) => {
                if documents.last().map(|d| d.doc_id != p.doc_id).unwrap_or(true) {
                    documents.push(Document { doc_id: p.doc_id.clone(), sentences: Vec::new() });
                }
                documents.last_mut().expect("pushed").sentences.push(tree);
                report.entries.push(IngestEntry { sentence_id, status: IngestStatus::Accepted });
            }
            Err(e) => report.entries.push(IngestEntry { sentence_id, status: IngestStatus::Rejected(e) }),
        }
    };

    let width = columns.width();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            flush(pending.take(), &mut documents, &mut report);
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(id) = comment_value(comment, &["doc_id", "newdoc id", "newdoc"]) {
                flush(pending.take(), &mut documents, &mut report);
                doc_id = if id.is_empty() { format!("doc{}", documents.len() + 1) } else { id };
            } else if let Some(id) = comment_value(comment, &["sent_id"]) {
                match pending.as_mut() {
                    Some(p) if p.tokens.is_empty() => p.sentence_id = Some(id),
                    Some(_) => {
                        flush(pending.take(), &mut documents, &mut report);
                        pending_sent_id = Some(id);
                    }
                    None => pending_sent_id = Some(id),
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() < width {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: format!("expected at least {width} tab-separated columns, found {}", fields.len()),
            });
        }
        let id_field = fields[columns.id];
        if id_field.contains('-') || id_field.contains('.') {
            continue;
        }
        let index: usize = id_field.parse().map_err(|_| CorpusError::Malformed {
            line: lineno,
            message: format!("token id {id_field:?} is not an integer"),
        })?;
        let head: usize = fields[columns.head].parse().map_err(|_| CorpusError::Malformed {
            line: lineno,
            message: format!("head {:?} is not a non-negative integer", fields[columns.head]),
        })?;
        let p = pending.get_or_insert_with(|| PendingSentence {
            doc_id: doc_id.clone(),
            sentence_id: pending_sent_id.take(),
            tokens: Vec::new(),
        });
        p.tokens.push(Token::new(
            index,
            fields[columns.form],
            fields[columns.lemma],
            fields[columns.upos],
            head,
            fields[columns.deprel],
        ));
    }
    flush(pending.take(), &mut documents, &mut report);
    Ok(Treebank { documents, report })
}

fn comment_value(comment: &str, keys: &[&str]) -> Option<String> {
    let c = comment.trim();
    for key in keys {
        if let Some(rest) = c.strip_prefix(key) {
            let rest = rest.trim_start();
            if let Some(v) = rest.strip_prefix('=') {
                return Some(v.trim().to_string());
            }
            // `# newdoc` alone, or `# doc_id X`
            if rest.is_empty() || c.len() > key.len() && c.as_bytes()[key.len()].is_ascii_whitespace() {
                return Some(rest.trim().to_string());
            }
        }
    }
    None
}

/// Serializes documents as 10-column CoNLL-U with doc/sentence comments.
pub fn write_conll(documents: &[Document]) -> String {
    let mut out = String::new();
    for doc in documents {
        out.push_str(&format!("# doc_id = {}\n", doc.doc_id));
        for tree in &doc.sentences {
            out.push_str(&format!("# sent_id = {}\n", tree.sentence_id));
            for t in tree.tokens() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_\n",
                    t.index, t.form, t.lemma, t.upos, t.head, t.deprel
                ));
            }
            out.push('\n');
        }
    }
    out
}

/// Returns the head vector (index 0 ↔ token 1) when the tokens form a valid
/// projective tree.
fn validate(tokens: &[Token]) -> Result<Vec<usize>, TreeError> {
    let n = tokens.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    if tokens.iter().enumerate().any(|(i, t)| t.index != i + 1) {
        return Err(TreeError::BadNumbering);
    }
    let heads: Vec<usize> = tokens.iter().map(|t| t.head).collect();
    if heads.iter().any(|&h| h > n) {
        return Err(TreeError::HeadOutOfRange);
    }
    if tokens.iter().any(|t| t.head == t.index) {
        return Err(TreeError::SelfLoop);
    }
    match heads.iter().filter(|&&h| h == 0).count() {
        0 => return Err(TreeError::NoRoot),
        1 => {}
        _ => return Err(TreeError::MultipleRoots),
    }
    for start in 1..=n {
        let mut cur = start;
        let mut steps = 0;
        while cur != 0 {
            cur = heads[cur - 1];
            steps += 1;
            if steps > n {
                return Err(TreeError::Cycle);
            }
        }
    }
    if !crossing_arcs(&heads).is_empty() {
        return Err(TreeError::NonProjective);
    }
    Ok(heads)
}

/// All pairs of crossing arcs, found by exhaustive pair enumeration. Arcs are
/// spans `(min, max)` of (head, dependent) positions; the root attaches to
/// position 0, so an arc covering the root also counts as crossing.
pub fn crossing_arcs(heads: &[usize]) -> Vec<((usize, usize), (usize, usize))> {
    let arcs: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let d = i + 1;
            (h.min(d), h.max(d))
        })
        .collect();
    let mut out = Vec::new();
    for (i, &(a, b)) in arcs.iter().enumerate() {
        for &(c, d) in &arcs[i + 1..] {
            if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                out.push(((a, b), (c, d)));
            }
        }
    }
    out
}

impl fmt::Display for DependencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.forms().join(" "))
    }
}

/// Distinct lemmas (lower-cased) of `tree` whose POS is in `pos`.
pub fn lemma_set(tree: &DependencyTree, pos: &BTreeSet<String>) -> BTreeSet<String> {
    tree.tokens().iter().filter(|t| pos.contains(&t.upos)).map(|t| t.lemma_or_form().to_lowercase()).collect()
}
