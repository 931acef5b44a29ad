//! Train the character and word language models on the bundled desk
//! corpus, write them as ARPA files and read them back.

use taptype::lm::{CharLm, Corpus, WordLm, WordLmConfig};
use taptype::DESK_CORPUS;

fn main() -> taptype::Result<()> {
    let corpus = Corpus::from_text(DESK_CORPUS);
    println!("{} sentences, {} tokens", corpus.len(), corpus.token_count());

    let chars = CharLm::train(&corpus, CharLm::DEFAULT_ORDER)?;
    let words = WordLm::train(&corpus, &WordLmConfig::default())?;
    println!("character model of order {}, word model with {} words", chars.order(), words.words().count());

    for w in ["the", "teh", "keyboard", "qzx"] {
        println!("  ln P_char({w}) = {:.3}", chars.score_word(w)?);
    }
    for (context, w) in [(&["of"][..], "the"), (&["of"][..], "a"), (&["it", "is"][..], "a")] {
        println!("  ln P_word({w} | {}) = {:.3}", context.join(" "), words.log_prob(context, w));
    }

    let dir = std::env::temp_dir();
    let (char_path, word_path) = (dir.join("taptype-chars.arpa"), dir.join("taptype-words.arpa"));
    chars.write_arpa(&char_path)?;
    words.write_arpa(&word_path)?;
    let reread = CharLm::read_arpa(&char_path)?;
    println!(
        "round trip through {}: {:.12} vs {:.12}",
        char_path.display(),
        chars.score_word("keyboard")?,
        reread.score_word("keyboard")?
    );
    WordLm::read_arpa(&word_path)?;
    Ok(())
}
