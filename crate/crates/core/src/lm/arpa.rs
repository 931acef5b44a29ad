//! ARPA text format: `\data\` header with per-order counts, one
//! `\N-grams:` section per order with tab-separated log10 probability,
//! n-gram and optional log10 back-off weight, then `\end\`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::backoff::{BackoffModel, Entry};
use super::vocab::Vocab;
use crate::error::{Error, Result};

const LN_10: f64 = std::f64::consts::LN_10;

pub fn write_arpa<W: Write>(model: &BackoffModel, mut out: W) -> Result<()> {
    out.write_all(to_arpa_string(model).as_bytes())?;
    Ok(())
}

pub fn to_arpa_string(model: &BackoffModel) -> String {
    let order = model.order();
    let vocab = model.vocab();
    let mut s = String::from("\\data\\\n");
    for n in 1..=order {
        let _ = writeln!(s, "ngram {n}={}", model.count(n));
    }
    for n in 1..=order {
        let _ = write!(s, "\n\\{n}-grams:\n");
        for (ngram, entry) in model.ngrams(n) {
            let words: Vec<&str> = ngram.iter().map(|&t| vocab.token(t)).collect();
            let _ = write!(s, "{}\t{}", entry.log_prob / LN_10, words.join(" "));
            if n < order {
                let _ = write!(s, "\t{}", entry.backoff / LN_10);
            }
            s.push('\n');
        }
    }
    s.push_str("\n\\end\\\n");
    s
}

struct RawGram {
    line: usize,
    log10_prob: f64,
    words: Vec<String>,
    log10_backoff: f64,
}

pub fn read_arpa<R: BufRead>(input: R) -> Result<BackoffModel> {
    let mut header: Vec<usize> = Vec::new();
    let mut sections: Vec<Vec<RawGram>> = Vec::new();
    let mut state = State::Preamble;
    let mut ended = false;

    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match state {
            State::Preamble => {
                if trimmed == "\\data\\" {
                    state = State::Header;
                }
            }
            State::Header if trimmed.starts_with("ngram ") => {
                let (n, count) = trimmed[6..]
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, "expected `ngram N=count`"))?;
                let n: usize = n.trim().parse().map_err(|_| Error::parse(lineno, "bad order in header"))?;
                let count: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(lineno, "bad count in header"))?;
                if n != header.len() + 1 {
                    return Err(Error::parse(lineno, format!("header order {n} out of sequence")));
                }
                header.push(count);
            }
            State::Header | State::Section(_) if trimmed.starts_with('\\') => {
                if trimmed == "\\end\\" {
                    ended = true;
                    break;
                }
                let n = parse_section_header(trimmed).ok_or_else(|| Error::parse(lineno, format!("unexpected line {trimmed:?}")))?;
                if n != sections.len() + 1 || n > header.len() {
                    return Err(Error::parse(lineno, format!("unexpected section for order {n}")));
                }
                sections.push(Vec::new());
                state = State::Section(n);
            }
            State::Header => return Err(Error::parse(lineno, format!("unexpected line {trimmed:?} in header"))),
            State::Section(n) => {
                let fields: Vec<&str> = trimmed.split_whitespace().collect();
                if fields.len() != n + 1 && fields.len() != n + 2 {
                    return Err(Error::parse(lineno, format!("expected {n} words with probability and optional back-off")));
                }
                let log10_prob: f64 = fields[0]
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("bad probability {:?}", fields[0])))?;
                let log10_backoff: f64 = match fields.get(n + 1) {
                    Some(b) => b.parse().map_err(|_| Error::parse(lineno, format!("bad back-off {b:?}")))?,
                    None => 0.0,
                };
                if !log10_prob.is_finite() || !log10_backoff.is_finite() {
                    return Err(Error::parse(lineno, "non-finite value"));
                }
                sections[n - 1].push(RawGram {
                    line: lineno,
                    log10_prob,
                    words: fields[1..=n].iter().map(|w| (*w).to_owned()).collect(),
                    log10_backoff,
                });
            }
        }
    }

    if !ended {
        return Err(Error::Format("missing \\end\\ marker".into()));
    }
    if header.is_empty() {
        return Err(Error::Format("missing \\data\\ header".into()));
    }
    if sections.len() != header.len() {
        return Err(Error::Format(format!("header lists {} orders but file has {} sections", header.len(), sections.len())));
    }
    for (n, (expected, section)) in header.iter().zip(&sections).enumerate() {
        if *expected != section.len() {
            return Err(Error::Format(format!("header says {expected} {}-grams, section has {}", n + 1, section.len())));
        }
    }

    let vocab = Vocab::from_tokens(sections[0].iter().map(|g| g.words[0].clone()).collect())?;
    let mut model = BackoffModel::new(vocab, header.len())?;
    for section in &sections {
        for gram in section {
            let ids: Option<Vec<u32>> = gram.words.iter().map(|w| model.vocab().id(w)).collect();
            let ids = ids.ok_or_else(|| Error::parse(gram.line, "n-gram uses a word missing from the unigrams"))?;
            model.insert(
                &ids,
                Entry {
                    log_prob: gram.log10_prob * LN_10,
                    backoff: gram.log10_backoff * LN_10,
                },
            );
        }
    }
    Ok(model)
}

enum State {
    Preamble,
    Header,
    Section(usize),
}

fn parse_section_header(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?.strip_suffix("-grams:")?.parse().ok()
}
