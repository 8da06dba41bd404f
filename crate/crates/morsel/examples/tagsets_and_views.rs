//! Morphotactic tags, level projection and the derived views.
//!
//! ```bash
//! cargo run -p morsel --example tagsets_and_views
//! ```

use morsel::corpus::{Dataset, DatasetRole};
use morsel::tags::{MorphTag, Tagset, TagsetLevel};

fn main() -> morsel::Result<()> {
    // One annotated Turkish word type in the corpus format.
    let corpus = "gençleşmelerin\tgenç:ROOT:ADJ leş:SUFFIX:DERIV:VERB me:SUFFIX:DERIV:NOUN \
                  ler:SUFFIX:INFL:NOUN:NUMBER:PLURAL in:SUFFIX:INFL:NOUN:CASE:GENITIVE";
    let data = Dataset::parse_str(corpus, DatasetRole::Train)?;
    let analysis = &data.entries()[0].analyses[0];

    println!("word: {}", analysis.word());
    println!("labeled segmentation: {analysis}");

    // Project the full labels down the granularity hierarchy.
    for level in (0..=5u8).rev() {
        let level = TagsetLevel::new(level)?;
        let projected = analysis.project(level);
        let tags: Vec<String> = projected
            .segments()
            .iter()
            .map(|(_, t)| t.to_string())
            .collect();
        println!("level {level}: {}", tags.join(" | "));
    }

    // Tagsets induced from the data grow with the level.
    for level in 0..=5u8 {
        let level = TagsetLevel::new(level)?;
        let tagset = Tagset::build(data.analyses(), level)?;
        println!("tagset size at level {level}: {}", tagset.len());
    }

    // All derived views come from the one labeled output.
    let views = analysis.derive_views()?;
    println!("unlabeled segmentation: {}", views.ums.join(" "));
    println!("roots: {}", views.roots.join(" "));
    println!("stem: {}", views.stem);
    println!("inflectional tag bundle: {}", views.morph_tag.join(":"));

    // Tag paths are validated: inflection may not hang off a root.
    let err = MorphTag::parse("ROOT:INFL").unwrap_err();
    println!("rejected tag: {err}");
    Ok(())
}
