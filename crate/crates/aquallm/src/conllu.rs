//! CoNLL-U reading and writing for annotated captions.
//!
//! Each sentence block carries `# caption_id`, `# audio_id` and `# text`
//! comments. Entity tags travel in the MISC column as `NER=B-TYPE`; a missing
//! key or `NER=O` means no entity.

use std::fmt::Write as _;

use aquallm_core::{AnnotatedCaption, AnnotationError, Token, Upos};

#[derive(Debug, thiserror::Error)]
pub enum ConlluError {
    #[error("sentence {sentence}: missing `# {key} = ...` comment")]
    MissingComment { sentence: usize, key: &'static str },
    #[error("sentence {sentence}, line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount {
        sentence: usize,
        line: usize,
        found: usize,
    },
    #[error("sentence {sentence}, line {line}: bad {column} value {value:?}")]
    BadField {
        sentence: usize,
        line: usize,
        column: &'static str,
        value: String,
    },
    #[error("sentence {sentence}: {source}")]
    Annotation {
        sentence: usize,
        #[source]
        source: AnnotationError,
    },
}

#[derive(Default)]
struct Block {
    caption_id: Option<String>,
    audio_id: Option<String>,
    text: Option<String>,
    tokens: Vec<Token>,
}

impl Block {
    fn is_empty(&self) -> bool {
        self.caption_id.is_none()
            && self.audio_id.is_none()
            && self.text.is_none()
            && self.tokens.is_empty()
    }

    fn finish(self, sentence: usize) -> Result<AnnotatedCaption, ConlluError> {
        let missing = |key| ConlluError::MissingComment { sentence, key };
        let caption = AnnotatedCaption {
            caption_id: self.caption_id.ok_or_else(|| missing("caption_id"))?,
            audio_id: self.audio_id.ok_or_else(|| missing("audio_id"))?,
            text: self.text.ok_or_else(|| missing("text"))?,
            tokens: self.tokens,
        };
        caption
            .validate()
            .map_err(|source| ConlluError::Annotation { sentence, source })?;
        Ok(caption)
    }
}

/// Parses every sentence block, in file order. Sentence ordinals in errors
/// are 1-based.
pub fn parse_conllu(input: &str) -> Result<Vec<AnnotatedCaption>, ConlluError> {
    let mut out = Vec::new();
    let mut block = Block::default();
    for (i, raw) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let sentence = out.len() + 1;
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(std::mem::take(&mut block).finish(sentence)?);
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim().to_string();
                match key.trim() {
                    "caption_id" => block.caption_id = Some(value),
                    "audio_id" => block.audio_id = Some(value),
                    "text" => block.text = Some(value),
                    _ => {}
                }
            }
            continue;
        }
        if let Some(token) = parse_token_line(line, sentence, line_no)? {
            block.tokens.push(token);
        }
    }
    if !block.is_empty() {
        let sentence = out.len() + 1;
        out.push(block.finish(sentence)?);
    }
    Ok(out)
}

fn parse_token_line(
    line: &str,
    sentence: usize,
    line_no: usize,
) -> Result<Option<Token>, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ConlluError::ColumnCount {
            sentence,
            line: line_no,
            found: cols.len(),
        });
    }
    let bad = |column, value: &str| ConlluError::BadField {
        sentence,
        line: line_no,
        column,
        value: value.to_string(),
    };
    // multiword ranges (1-2) and empty nodes (1.1) carry no syntactic word
    if cols[0].contains('-') || cols[0].contains('.') {
        return Ok(None);
    }
    let index: usize = cols[0].parse().map_err(|_| bad("ID", cols[0]))?;
    if index == 0 {
        return Err(bad("ID", cols[0]));
    }
    let upos: Upos = cols[3].parse().map_err(|_| bad("UPOS", cols[3]))?;
    let head: usize = cols[6].parse().map_err(|_| bad("HEAD", cols[6]))?;
    let ner = cols[9]
        .split('|')
        .find_map(|kv| kv.strip_prefix("NER="))
        .filter(|tag| *tag != "O")
        .map(str::to_string);
    Ok(Some(Token {
        index,
        text: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos,
        head,
        deprel: cols[7].to_string(),
        ner,
    }))
}

/// Writes captions as CoNLL-U. XPOS, FEATS and DEPS are written as `_`.
pub fn write_conllu(captions: &[AnnotatedCaption]) -> String {
    let mut out = String::new();
    for caption in captions {
        let _ = writeln!(out, "# caption_id = {}", caption.caption_id);
        let _ = writeln!(out, "# audio_id = {}", caption.audio_id);
        let _ = writeln!(out, "# text = {}", caption.text);
        for t in &caption.tokens {
            let misc = t
                .ner
                .as_deref()
                .map(|tag| format!("NER={tag}"))
                .unwrap_or_else(|| "_".to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t{}",
                t.index,
                t.text,
                t.lemma,
                t.upos.as_str(),
                t.head,
                t.deprel,
                misc
            );
        }
        out.push('\n');
    }
    out
}
