//! What the feature extractor sees for one candidate segment.
//!
//! ```bash
//! cargo run -p morsel --example feature_extraction
//! ```

use morsel::corpus::{AffixGazetteer, DictionarySet};
use morsel::features::{
    context_ngram_features, dictionary_features, gazetteer_features, lsv_features, Extractor,
    FeatureConfig, FeatureVocabulary, LsvTable, Resources, Side,
};
use morsel::tags::MorphTag;

fn main() -> morsel::Result<()> {
    let word: Vec<char> = "gençleşmelerin".chars().collect();

    // Boundary context windows on both sides of the boundary before "ler".
    println!("left contexts at boundary 9:");
    for f in context_ngram_features(&word, 9, Side::Left, 3) {
        println!("  {f}");
    }
    println!("right contexts at boundary 9:");
    for f in context_ngram_features(&word, 9, Side::Right, 3) {
        println!("  {f}");
    }

    // Lookup families.
    let gazetteer = AffixGazetteer::parse_str("-ler\n-lar\n-in\n")?;
    let dictionary = DictionarySet::from_words(["genç", "home", "work"]);
    println!(
        "gazetteer features for 'ler': {:?}",
        gazetteer_features("ler", &gazetteer)
    );
    println!(
        "dictionary features for 'home': {:?}",
        dictionary_features("home", &dictionary)
    );

    // Letter successor variety from an unlabeled corpus.
    let table = LsvTable::build(["talked", "talks", "talking", "talk"]);
    println!(
        "successor variety of 'talk': {}",
        table.successor_variety("talk")
    );
    let talking: Vec<char> = "talking".chars().collect();
    println!(
        "LSV features at 'talk|ing': {:?}",
        lsv_features(&talking, 4, &table, &[2, 3])
    );

    // The full candidate featurization, mapped through a vocabulary.
    let config = FeatureConfig {
        use_affix: true,
        use_dict: true,
        ..FeatureConfig::default()
    };
    let resources = Resources {
        gazetteer: Some(gazetteer),
        dictionary: Some(dictionary),
        ..Resources::empty()
    };
    let extractor = Extractor::new(&config, &resources);
    let mut vocab = FeatureVocabulary::new();
    let label = MorphTag::parse("SUFFIX:INFL:NOUN:NUMBER:PLURAL")?;
    let prev = MorphTag::parse("SUFFIX:DERIV:NOUN")?;
    let vector = extractor.featurize(&word, 9..12, &label, Some(&prev), &mut vocab)?;
    println!(
        "candidate 'ler' as {label} fires {} features:",
        vector.len()
    );
    for (index, _) in vector.iter() {
        println!("  [{index}] {}", vocab.name(index));
    }
    Ok(())
}
