//! Partitioned token vocabulary, attribute-value lexicon and question
//! tokenization.
//!
//! Ids are laid out as `[keywords | comparators | database symbols | words]`,
//! so every id below [`Vocabulary::sql_len`] is a SQL-side token. Database
//! symbols list every table name first and then every qualified attribute.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::schema::{AttrRef, Database, Schema};
use crate::text::{collapse_whitespace, fnv1a64, normalize};

/// SQL keywords. `Eos` terminates every generated query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Keyword {
    Select,
    From,
    Join,
    Where,
    And,
    Or,
    Eos,
}

impl Keyword {
    pub const ALL: [Keyword; 7] = [
        Keyword::Select,
        Keyword::From,
        Keyword::Join,
        Keyword::Where,
        Keyword::And,
        Keyword::Or,
        Keyword::Eos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Select => "select",
            Keyword::From => "from",
            Keyword::Join => "join",
            Keyword::Where => "where",
            Keyword::And => "and",
            Keyword::Or => "or",
            Keyword::Eos => "EOS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Keyword::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

pub const EQ_TOKEN: &str = "=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Keyword,
    Comparator,
    Database,
    NaturalLanguage,
}

/// A question word dropped from the word section because it spells a
/// SQL-side token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabWarning {
    pub word: String,
}

impl fmt::Display for VocabWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "question word `{}` collides with a SQL token; kept only on the SQL side",
            self.word
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, TokenId>,
    table_count: usize,
    attr_offsets: Vec<usize>,
    attr_count: usize,
}

const KEYWORD_COUNT: usize = 7;
const EQ_ID: usize = KEYWORD_COUNT;
const DB_START: usize = KEYWORD_COUNT + 1;

impl Vocabulary {
    /// Builds the vocabulary from the schema and the tokenized questions.
    /// Words that spell a SQL token are reported and kept on the SQL side only.
    pub fn build<'a>(
        schema: &Schema,
        questions: impl IntoIterator<Item = &'a TokenSeq>,
    ) -> (Self, Vec<VocabWarning>) {
        let mut words = BTreeSet::new();
        for q in questions {
            for t in q.iter() {
                words.insert(normalize(&t.text));
            }
        }
        Self::from_words(schema, words)
    }

    /// Rebuilds a vocabulary from an explicit word list (checkpoint reload).
    pub fn from_words<I, S>(schema: &Schema, words: I) -> (Self, Vec<VocabWarning>)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = Keyword::ALL.iter().map(|k| k.as_str().into()).collect();
        tokens.push(EQ_TOKEN.into());
        for t in schema.tables() {
            tokens.push(t.name.clone());
        }
        let mut attr_offsets = Vec::with_capacity(schema.table_count());
        let mut offset = DB_START + schema.table_count();
        for t in schema.tables() {
            attr_offsets.push(offset);
            offset += t.columns.len();
        }
        for a in schema.attrs() {
            tokens.push(schema.attr_name(a));
        }
        let sql_len = tokens.len();
        let mut ids: BTreeMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (normalize(t), TokenId(i)))
            .collect();

        let mut sorted: Vec<String> = words.into_iter().map(|w| normalize(w.as_ref())).collect();
        sorted.sort();
        sorted.dedup();
        let mut warnings = Vec::new();
        for w in sorted {
            if w.is_empty() {
                continue;
            }
            if ids.contains_key(&w) {
                if ids[&w].0 < sql_len {
                    warnings.push(VocabWarning { word: w });
                }
                continue;
            }
            ids.insert(w.clone(), TokenId(tokens.len()));
            tokens.push(w);
        }
        let vocab = Vocabulary {
            tokens,
            ids,
            table_count: schema.table_count(),
            attr_offsets,
            attr_count: schema.attr_count(),
        };
        (vocab, warnings)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Size of the SQL side (keywords, comparators, tables, attributes).
    pub fn sql_len(&self) -> usize {
        DB_START + self.table_count + self.attr_count
    }

    pub fn section(&self, id: TokenId) -> Section {
        match id.0 {
            i if i < KEYWORD_COUNT => Section::Keyword,
            EQ_ID => Section::Comparator,
            i if i < self.sql_len() => Section::Database,
            _ => Section::NaturalLanguage,
        }
    }

    pub fn token_of(&self, id: TokenId) -> &str {
        &self.tokens[id.0]
    }

    /// Case-insensitive lookup of any token.
    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.ids.get(&normalize(token)).copied()
    }

    pub fn keyword(&self, k: Keyword) -> TokenId {
        TokenId(k as usize)
    }

    pub fn eq_id(&self) -> TokenId {
        TokenId(EQ_ID)
    }

    pub fn table_id(&self, table: usize) -> TokenId {
        TokenId(DB_START + table)
    }

    pub fn attr_id(&self, attr: AttrRef) -> TokenId {
        TokenId(self.attr_offsets[attr.table] + attr.column)
    }

    pub fn as_keyword(&self, id: TokenId) -> Option<Keyword> {
        Keyword::ALL.get(id.0).copied()
    }

    pub fn as_table(&self, id: TokenId) -> Option<usize> {
        (DB_START..DB_START + self.table_count)
            .contains(&id.0)
            .then(|| id.0 - DB_START)
    }

    pub fn as_attr(&self, id: TokenId) -> Option<AttrRef> {
        if id.0 < DB_START + self.table_count || id.0 >= self.sql_len() {
            return None;
        }
        let table = self.attr_offsets.iter().rposition(|&o| o <= id.0)?;
        Some(AttrRef {
            table,
            column: id.0 - self.attr_offsets[table],
        })
    }

    /// Row of the embedding table for a word; out-of-vocabulary words share
    /// the extra row at index `len()`.
    pub fn embedding_row(&self, word: &str) -> usize {
        self.id_of(word).map_or(self.unk_row(), |id| id.0)
    }

    pub fn unk_row(&self) -> usize {
        self.tokens.len()
    }

    /// Word-section tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[self.sql_len()..]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Fingerprint over the full ordered token list.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(
            self.tokens
                .iter()
                .flat_map(|t| t.bytes().chain(core::iter::once(b'\n'))),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexiconOptions {
    /// Leave primary-key columns out of the lexicon.
    pub exclude_primary_keys: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    /// First surface form seen for the value.
    pub surface: String,
    pub attrs: BTreeSet<AttrRef>,
}

/// Every distinct cell value, keyed by its normalized text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueLexicon {
    entries: BTreeMap<String, LexiconEntry>,
    max_words: usize,
}

impl ValueLexicon {
    pub fn build(db: &Database, options: LexiconOptions) -> Self {
        let schema = db.schema();
        let mut lex = ValueLexicon::default();
        for attr in schema.attrs() {
            if options.exclude_primary_keys && schema.primary_key(attr.table) == Some(attr) {
                continue;
            }
            for row in 0..db.row_count(attr.table) {
                let key = db.normalized_value(attr, row);
                if key.is_empty() {
                    continue;
                }
                lex.insert(key, db.value(attr, row), attr);
            }
        }
        lex
    }

    fn insert(&mut self, key: &str, surface: &str, attr: AttrRef) {
        let words = key.split(' ').count();
        self.max_words = self.max_words.max(words);
        self.entries
            .entry(key.to_string())
            .or_insert_with(|| LexiconEntry {
                surface: collapse_whitespace(surface),
                attrs: BTreeSet::new(),
            })
            .attrs
            .insert(attr);
    }

    pub fn get(&self, value: &str) -> Option<&LexiconEntry> {
        self.entries.get(&normalize(value))
    }

    pub fn contains(&self, value: &str) -> bool {
        self.get(value).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest key, in words.
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LexiconEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceToken {
    pub text: String,
    /// Produced by lexicon matching; the only kind of token the default
    /// grammar mask allows to be copied.
    pub is_value: bool,
}

impl SourceToken {
    pub fn key(&self) -> String {
        normalize(&self.text)
    }
}

/// A tokenized question.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<SourceToken>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<SourceToken>) -> Self {
        TokenSeq { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> &SourceToken {
        &self.tokens[i]
    }

    pub fn iter(&self) -> core::slice::Iter<'_, SourceToken> {
        self.tokens.iter()
    }

    /// Tokens joined with single spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&t.text);
        }
        out
    }

    /// First position holding the (normalized) value, if any.
    pub fn position_of(&self, value: &str) -> Option<usize> {
        let key = normalize(value);
        self.tokens.iter().position(|t| t.key() == key)
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            if t.is_value {
                write!(f, "<{}>", t.text)?;
            } else {
                f.write_str(&t.text)?;
            }
        }
        Ok(())
    }
}

/// Whitespace split followed by greedy longest-match merging of word runs
/// that spell a lexicon value.
pub fn tokenize_question(text: &str, lexicon: &ValueLexicon) -> TokenSeq {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut tokens = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let longest = lexicon.max_words().min(words.len() - i);
        let matched = (1..=longest).rev().find(|&n| {
            let candidate = words[i..i + n].join(" ");
            lexicon.contains(&candidate)
        });
        match matched {
            Some(n) => {
                tokens.push(SourceToken {
                    text: words[i..i + n].join(" "),
                    is_value: true,
                });
                i += n;
            }
            None => {
                tokens.push(SourceToken {
                    text: words[i].to_string(),
                    is_value: false,
                });
                i += 1;
            }
        }
    }
    TokenSeq { tokens }
}

/// The set `U` of distinct attribute values mentioned in a question, as
/// normalized keys.
pub fn extract_value_set(tokens: &TokenSeq, lexicon: &ValueLexicon) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| t.is_value && lexicon.contains(&t.text))
        .map(SourceToken::key)
        .collect()
}

/// Renders a vocabulary summary line (used in logs).
pub fn describe(vocab: &Vocabulary) -> String {
    format!(
        "vocabulary: {} tokens ({} SQL, {} words)",
        vocab.len(),
        vocab.sql_len(),
        vocab.len() - vocab.sql_len()
    )
}
