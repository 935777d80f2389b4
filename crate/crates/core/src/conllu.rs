//! CoNLL-U document model, reader and writer.
//!
//! A [`Document`] is a list of [`Sentence`]s. Each sentence holds its
//! syntactic [`Word`]s and the surface [`Token`]s that cover them. Every
//! word belongs to exactly one token; multi-word tokens (range lines such
//! as `1-2 im`) span more than one word.
//!
//! Empty nodes (decimal ids) are skipped on read and never written.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence}: {message}")]
    Invalid { sentence: usize, message: String },
    #[error("document has {found} sentences, at least {required} are needed for a {train}:{dev} split")]
    TooFewSentences {
        found: usize,
        required: usize,
        train: usize,
        dev: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ConlluError>;

/// Morphological features, kept sorted by key.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Features(BTreeMap<String, String>);

impl Features {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `Key=Val|Key=Val`. `_` and the empty string are the empty bundle.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let mut map = BTreeMap::new();
        if s == "_" || s.is_empty() {
            return Ok(Features(map));
        }
        for pair in s.split('|') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("feature '{}' is not Key=Value", pair))?;
            if k.is_empty() || v.is_empty() {
                return Err(format!("feature '{}' has an empty key or value", pair));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(format!("duplicate feature key '{}'", k));
            }
        }
        Ok(Features(map))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("_");
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={}", k, v)?;
        }
        Ok(())
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Features {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Features(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// One syntactic word. Empty strings stand for the CoNLL-U `_` placeholder.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Word {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: Features,
    pub head: Option<usize>,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl Word {
    pub fn new(id: usize, form: impl Into<String>) -> Self {
        Word {
            id,
            form: form.into(),
            ..Default::default()
        }
    }
}

/// A surface token covering the inclusive word-id range `span`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Token {
    pub span: (usize, usize),
    pub form: String,
    /// MISC column of the range line; only meaningful for multi-word tokens.
    pub misc: String,
}

impl Token {
    pub fn single(id: usize, form: impl Into<String>) -> Self {
        Token {
            span: (id, id),
            form: form.into(),
            misc: String::new(),
        }
    }

    pub fn is_mwt(&self) -> bool {
        self.span.1 > self.span.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub words: Vec<Word>,
    pub tokens: Vec<Token>,
    /// Value of the `# text = ...` comment.
    pub text: Option<String>,
    /// All other comment lines, verbatim (including the leading `#`).
    pub comments: Vec<String>,
}

impl Sentence {
    /// A sentence of single-word tokens.
    pub fn from_forms<S: AsRef<str>>(forms: &[S]) -> Self {
        let words: Vec<Word> = forms
            .iter()
            .enumerate()
            .map(|(i, f)| Word::new(i + 1, f.as_ref()))
            .collect();
        let tokens = words.iter().map(|w| Token::single(w.id, &w.form)).collect();
        Sentence {
            words,
            tokens,
            text: None,
            comments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words of `token`, as a slice.
    pub fn token_words(&self, token: &Token) -> &[Word] {
        &self.words[token.span.0 - 1..token.span.1]
    }

    /// Whether `token` is followed by whitespace in the raw text.
    pub fn space_after(&self, token: &Token) -> bool {
        let misc = if token.is_mwt() {
            &token.misc
        } else {
            &self.words[token.span.0 - 1].misc
        };
        !misc_contains(misc, "SpaceAfter=No")
    }

    /// Surface text rebuilt from token forms and `SpaceAfter=No`.
    pub fn detokenize(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(&t.form);
            if i + 1 < self.tokens.len() && self.space_after(t) {
                out.push(' ');
            }
        }
        out
    }

    pub fn has_heads(&self) -> bool {
        !self.words.is_empty() && self.words.iter().all(|w| w.head.is_some())
    }

    /// Checks ids, token coverage, head ranges and the tree shape.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (i, w) in self.words.iter().enumerate() {
            if w.id != i + 1 {
                return Err(format!("word {} has id {}, expected {}", i + 1, w.id, i + 1));
            }
        }
        let mut next = 1;
        for t in &self.tokens {
            if t.span.0 != next || t.span.1 < t.span.0 {
                return Err(format!(
                    "token '{}' spans {}-{}, expected to start at {}",
                    t.form, t.span.0, t.span.1, next
                ));
            }
            next = t.span.1 + 1;
        }
        if next != self.words.len() + 1 {
            return Err(format!(
                "tokens cover {} words but the sentence has {}",
                next - 1,
                self.words.len()
            ));
        }
        let present = self.words.iter().filter(|w| w.head.is_some()).count();
        if present == 0 {
            return Ok(());
        }
        if present != self.words.len() {
            return Err("heads are present on some words but not others".into());
        }
        let heads: Vec<usize> = self.words.iter().map(|w| w.head.unwrap()).collect();
        for (w, &h) in self.words.iter().zip(&heads) {
            if h > self.words.len() {
                return Err(format!("word {} has head {} out of range", w.id, h));
            }
            if !w.deprel.is_empty() && (h == 0) != (universal_deprel(&w.deprel) == "root") {
                return Err(format!(
                    "word {} has head {} with relation '{}'",
                    w.id, h, w.deprel
                ));
            }
        }
        validate_tree(&heads)
    }
}

/// Checks that `heads` (1-based head per word, 0 = root) is a single-rooted tree.
pub fn validate_tree(heads: &[usize]) -> std::result::Result<(), String> {
    let n = heads.len();
    let roots = heads.iter().filter(|&&h| h == 0).count();
    if roots != 1 {
        return Err(format!("tree has {} roots", roots));
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("word {} has head {} out of range", i + 1, h));
        }
        if h == i + 1 {
            return Err(format!("word {} is its own head", i + 1));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(format!("cycle through word {}", v));
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// Relation without its language-specific subtype (`nmod:poss` -> `nmod`).
pub fn universal_deprel(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

pub fn misc_contains(misc: &str, item: &str) -> bool {
    misc.split('|').any(|m| m == item)
}

/// Adds `item` to a `|`-separated MISC value if it is not already there.
pub fn misc_insert(misc: &mut String, item: &str) {
    if misc_contains(misc, item) {
        return;
    }
    if !misc.is_empty() {
        misc.push('|');
    }
    misc.push_str(item);
}

pub fn misc_remove(misc: &mut String, item: &str) {
    let kept: Vec<&str> = misc.split('|').filter(|m| *m != item && !m.is_empty()).collect();
    *misc = kept.join("|");
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub sentences: Vec<Sentence>,
    pub raw_text: Option<String>,
}

impl Document {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Document {
            sentences,
            raw_text: None,
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> {
        self.sentences.iter().flat_map(|s| s.words.iter())
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sentences.iter().enumerate() {
            s.validate().map_err(|message| ConlluError::Invalid {
                sentence: i + 1,
                message,
            })?;
        }
        Ok(())
    }

    /// Raw text rebuilt from the sentences. Paragraphs (`# newpar`) are
    /// separated by a blank line, sentences inside one by a space.
    pub fn reconstruct_raw_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                let newpar = s.comments.iter().any(|c| c.starts_with("# newpar"));
                out.push_str(if newpar { "\n\n" } else { " " });
            }
            match &s.text {
                Some(t) => out.push_str(t),
                None => out.push_str(&s.detokenize()),
            }
        }
        out
    }
}

fn field(s: &str) -> String {
    if s == "_" {
        String::new()
    } else {
        s.to_string()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ConlluError {
    ConlluError::Parse {
        line,
        message: message.into(),
    }
}

struct SentenceBuilder {
    sentence: Sentence,
    first_line: usize,
    /// Range line waiting for its words: (start, end, form, misc).
    open_range: Option<(usize, usize)>,
}

impl SentenceBuilder {
    fn new(line: usize) -> Self {
        SentenceBuilder {
            sentence: Sentence::default(),
            first_line: line,
            open_range: None,
        }
    }

    fn push_range(&mut self, line: usize, start: usize, end: usize, form: &str, misc: &str) -> Result<()> {
        let expected = self.sentence.words.len() + 1;
        if end <= start {
            return Err(parse_err(line, format!("invalid range {}-{}", start, end)));
        }
        if let Some((_, open_end)) = self.open_range {
            if start <= open_end {
                return Err(parse_err(line, format!("range {}-{} overlaps {}", start, end, open_end)));
            }
        }
        if start != expected {
            return Err(parse_err(
                line,
                format!("range {}-{} does not start at the next word id {}", start, end, expected),
            ));
        }
        self.sentence.tokens.push(Token {
            span: (start, end),
            form: form.to_string(),
            misc: field(misc),
        });
        self.open_range = Some((start, end));
        Ok(())
    }

    fn push_word(&mut self, line: usize, id: usize, cols: &[&str]) -> Result<()> {
        let expected = self.sentence.words.len() + 1;
        if id != expected {
            return Err(parse_err(line, format!("word id {} found where {} was expected (gap in id sequence)", id, expected)));
        }
        let head = match cols[6] {
            "_" => None,
            h => Some(
                h.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("head '{}' is not an integer", h)))?,
            ),
        };
        let feats = Features::parse(cols[5]).map_err(|m| parse_err(line, m))?;
        self.sentence.words.push(Word {
            id,
            form: cols[1].to_string(),
            lemma: field(cols[2]),
            upos: field(cols[3]),
            xpos: field(cols[4]),
            feats,
            head,
            deprel: field(cols[7]),
            deps: field(cols[8]),
            misc: field(cols[9]),
        });
        match self.open_range {
            Some((_, end)) if id <= end => {
                if id == end {
                    self.open_range = None;
                }
            }
            _ => self.sentence.tokens.push(Token::single(id, cols[1])),
        }
        Ok(())
    }

    fn finish(self, index: usize) -> Result<Sentence> {
        if let Some((start, end)) = self.open_range {
            return Err(parse_err(
                self.first_line,
                format!("range {}-{} is not covered by words", start, end),
            ));
        }
        self.sentence.validate().map_err(|message| ConlluError::Invalid {
            sentence: index,
            message: format!("{} (sentence starting at line {})", message, self.first_line),
        })?;
        Ok(self.sentence)
    }
}

/// Reads a CoNLL-U document.
pub fn read_conllu<R: BufRead>(reader: R) -> Result<Document> {
    let mut doc = Document::default();
    let mut current: Option<SentenceBuilder> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if let Some(b) = current.take() {
                doc.sentences.push(b.finish(doc.sentences.len() + 1)?);
            }
            continue;
        }
        let b = current.get_or_insert_with(|| SentenceBuilder::new(lineno));
        if line.starts_with('#') {
            if let Some(rest) = line.strip_prefix("# text =") {
                b.sentence.text = Some(rest.trim().to_string());
            } else {
                b.sentence.comments.push(line.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(lineno, format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        let id = cols[0];
        if id.contains('.') {
            continue;
        }
        if let Some((a, z)) = id.split_once('-') {
            let start = a
                .parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("range id '{}' is not an integer range", id)))?;
            let end = z
                .parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("range id '{}' is not an integer range", id)))?;
            b.push_range(lineno, start, end, cols[1], cols[9])?;
        } else {
            let n = id
                .parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("word id '{}' is not an integer", id)))?;
            if n == 0 {
                return Err(parse_err(lineno, "word ids start at 1"));
            }
            b.push_word(lineno, n, &cols)?;
        }
    }
    if let Some(b) = current.take() {
        doc.sentences.push(b.finish(doc.sentences.len() + 1)?);
    }
    Ok(doc)
}

pub fn parse_conllu(text: &str) -> Result<Document> {
    read_conllu(text.as_bytes())
}

fn col(s: &str) -> &str {
    if s.is_empty() {
        "_"
    } else {
        s
    }
}

/// Serializes a document. Refuses documents that violate the invariants.
pub fn write_conllu_to<W: Write>(doc: &Document, mut out: W) -> Result<()> {
    doc.validate()?;
    for s in &doc.sentences {
        for c in &s.comments {
            writeln!(out, "{}", c)?;
        }
        if let Some(t) = &s.text {
            writeln!(out, "# text = {}", t)?;
        }
        for t in &s.tokens {
            if t.is_mwt() {
                writeln!(out, "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}", t.span.0, t.span.1, t.form, col(&t.misc))?;
            }
            for w in s.token_words(t) {
                let head = w.head.map(|h| h.to_string()).unwrap_or_else(|| "_".into());
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    w.id,
                    col(&w.form),
                    col(&w.lemma),
                    col(&w.upos),
                    col(&w.xpos),
                    w.feats,
                    head,
                    col(&w.deprel),
                    col(&w.deps),
                    col(&w.misc)
                )?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_conllu(doc: &Document) -> Result<String> {
    let mut buf = Vec::new();
    write_conllu_to(doc, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CoNLL-U output is UTF-8"))
}

/// Train/dev proportions, 7:1 by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: usize,
    pub dev: usize,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio { train: 7, dev: 1 }
    }
}

/// Deterministic split: within every block of `train + dev` consecutive
/// sentences, the last `dev` go to the dev document.
pub fn train_dev_split(doc: &Document, ratio: SplitRatio) -> Result<(Document, Document)> {
    let period = ratio.train + ratio.dev;
    if ratio.train == 0 || ratio.dev == 0 || doc.sentences.len() < period {
        return Err(ConlluError::TooFewSentences {
            found: doc.sentences.len(),
            required: period,
            train: ratio.train,
            dev: ratio.dev,
        });
    }
    let mut train = Document::default();
    let mut dev = Document::default();
    for (i, s) in doc.sentences.iter().enumerate() {
        if i % period >= ratio.train {
            dev.sentences.push(s.clone());
        } else {
            train.sentences.push(s.clone());
        }
    }
    Ok((train, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GERMAN: &str = "# text = im Haus\n\
1-2\tim\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tin\tin\tADP\tAPPR\t_\t3\tcase\t_\t_\n\
2\tdem\tder\tDET\tART\tGender=Neut|Case=Dat\t3\tdet\t_\t_\n\
3\tHaus\tHaus\tNOUN\tNN\t_\t0\troot\t_\tSpaceAfter=No\n\n";

    #[test]
    fn minimal_sentence() {
        let doc = parse_conllu("1\tHi\t_\t_\t_\t_\t_\t_\t_\t_\n2\t!\t_\t_\t_\t_\t_\t_\t_\t_\n\n").unwrap();
        assert_eq!(doc.sentences.len(), 1);
        assert_eq!(doc.sentences[0].words.len(), 2);
        assert_eq!(doc.sentences[0].tokens.len(), 2);
        assert!(doc.sentences[0].tokens.iter().all(|t| !t.is_mwt()));
    }

    #[test]
    fn range_line_becomes_mwt() {
        let doc = parse_conllu(GERMAN).unwrap();
        let s = &doc.sentences[0];
        assert_eq!(s.tokens[0].span, (1, 2));
        assert_eq!(s.tokens[0].form, "im");
        assert!(s.tokens[0].is_mwt());
        assert_eq!(s.text.as_deref(), Some("im Haus"));
        // features re-sorted on read
        assert_eq!(s.words[1].feats.to_string(), "Case=Dat|Gender=Neut");
    }

    #[test]
    fn id_gap_is_reported_with_line() {
        let err = parse_conllu("1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n3\tb\t_\t_\t_\t_\t_\t_\t_\t_\n").unwrap_err();
        match err {
            ConlluError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("gap"));
            }
            e => panic!("unexpected {:?}", e),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(
            parse_conllu("1\ta\t_\n"),
            Err(ConlluError::Parse { line: 1, .. })
        ));
        assert!(parse_conllu("x\ta\t_\t_\t_\t_\t_\t_\t_\t_\n").is_err());
        let overlap = "1-2\tab\t_\t_\t_\t_\t_\t_\t_\t_\n2-3\tbc\t_\t_\t_\t_\t_\t_\t_\t_\n1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n2\tb\t_\t_\t_\t_\t_\t_\t_\t_\n3\tc\t_\t_\t_\t_\t_\t_\t_\t_\n";
        assert!(matches!(parse_conllu(overlap), Err(ConlluError::Parse { line: 2, .. })));
        assert!(parse_conllu("1\ta\t_\t_\t_\tA=1|A=2\t_\t_\t_\t_\n").is_err());
    }

    #[test]
    fn write_empty_lemma_and_range() {
        let doc = parse_conllu(GERMAN).unwrap();
        let out = write_conllu(&doc).unwrap();
        assert!(out.contains("1-2\tim\t_"));
        let range_pos = out.find("1-2\t").unwrap();
        let word_pos = out.find("1\tin\t").unwrap();
        assert!(range_pos < word_pos);
        let s = Sentence::from_forms(&["a"]);
        let out = write_conllu(&Document::new(vec![s])).unwrap();
        assert_eq!(out, "1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n\n");
    }

    #[test]
    fn round_trip() {
        let doc = parse_conllu(GERMAN).unwrap();
        let again = parse_conllu(&write_conllu(&doc).unwrap()).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn invalid_documents_are_not_written() {
        let mut s = Sentence::from_forms(&["a", "b"]);
        s.words[0].head = Some(2);
        s.words[1].head = Some(1);
        assert!(write_conllu(&Document::new(vec![s])).is_err());
    }

    #[test]
    fn split_counts() {
        let doc = |n: usize| Document::new((0..n).map(|i| Sentence::from_forms(&[format!("w{}", i)])).collect());
        let (t, d) = train_dev_split(&doc(16), SplitRatio::default()).unwrap();
        assert_eq!((t.sentences.len(), d.sentences.len()), (14, 2));
        let (t, d) = train_dev_split(&doc(8), SplitRatio::default()).unwrap();
        assert_eq!((t.sentences.len(), d.sentences.len()), (7, 1));
        assert_eq!(d.sentences[0].words[0].form, "w7");
        // deterministic
        assert_eq!(
            train_dev_split(&doc(16), SplitRatio::default()).unwrap(),
            train_dev_split(&doc(16), SplitRatio::default()).unwrap()
        );
        assert!(train_dev_split(&doc(7), SplitRatio::default()).is_err());
    }

    #[test]
    fn newpar_reconstruction() {
        let mut a = Sentence::from_forms(&["Hi", "!"]);
        a.words[0].misc = "SpaceAfter=No".into();
        let mut b = Sentence::from_forms(&["Bye"]);
        b.comments.push("# newpar".into());
        let doc = Document::new(vec![a, b]);
        assert_eq!(doc.reconstruct_raw_text(), "Hi!\n\nBye");
    }

    fn random_tree(n: usize, seed: u64) -> Vec<usize> {
        // random recursive tree: each word attaches to an earlier-visited node
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        let mut heads = vec![0; n];
        for (k, &w) in order.iter().enumerate() {
            heads[w - 1] = if k == 0 { 0 } else { order[rng.gen_range(0..k)] };
        }
        heads
    }

    proptest! {
        #[test]
        fn random_trees_validate(n in 1usize..12, seed in any::<u64>()) {
            prop_assert!(validate_tree(&random_tree(n, seed)).is_ok());
        }

        #[test]
        fn corrupted_trees_are_rejected(n in 2usize..12, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
            let mut heads = random_tree(n, seed);
            let root = heads.iter().position(|&h| h == 0).unwrap();
            // second root
            let other = (root + 1 + pick.index(n - 1)) % n;
            let mut two_roots = heads.clone();
            two_roots[other] = 0;
            prop_assert!(validate_tree(&two_roots).is_err());
            // give the root a head inside its own subtree: always a cycle
            let child = pick.index(n);
            if child != root {
                heads[root] = child + 1;
                prop_assert!(validate_tree(&heads).is_err());
            }
        }

        #[test]
        fn write_read_round_trip(forms in prop::collection::vec("[a-zA-Z]{1,6}", 1..8), seed in any::<u64>()) {
            let mut s = Sentence::from_forms(&forms);
            let heads = random_tree(forms.len(), seed);
            for (w, h) in s.words.iter_mut().zip(&heads) {
                w.head = Some(*h);
                w.deprel = if *h == 0 { "root".into() } else { "dep".into() };
                w.upos = "X".into();
                w.feats = Features::parse("Z=1|A=2").unwrap();
            }
            s.text = Some(s.detokenize());
            let doc = Document::new(vec![s]);
            let again = parse_conllu(&write_conllu(&doc).unwrap()).unwrap();
            prop_assert_eq!(doc, again);
        }
    }
}
