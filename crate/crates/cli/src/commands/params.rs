use anyhow::Result;
use serde::Serialize;
use texnet::model::{build, count_parameters, Architecture};

use crate::pipeline::write_json;

/// Trainable-parameter counts published for the models this tool builds and
/// for two reference networks it does not.
const PUBLISHED: [(&str, u64); 4] = [
    ("TCNN", 11_900),
    ("TCNN Inc", 1_252_392),
    ("Inception V3", 23_851_784),
    ("AlexNet", 62_378_344),
];

#[derive(Debug, Serialize)]
struct Row {
    model: String,
    trainable: Option<usize>,
    non_trainable: Option<usize>,
    published_trainable: u64,
}

fn rows() -> Vec<Row> {
    let built =
        [Architecture::Tcnn, Architecture::TcnnInception].map(|a| count_parameters(&build(a)));
    PUBLISHED
        .iter()
        .enumerate()
        .map(|(i, &(model, published))| Row {
            model: model.to_owned(),
            trainable: built.get(i).map(|c| c.trainable),
            non_trainable: built.get(i).map(|c| c.non_trainable),
            published_trainable: published,
        })
        .collect()
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn run(json: bool, out: Option<&std::path::Path>) -> Result<()> {
    let rows = rows();
    if let Some(dir) = out {
        write_json(&dir.join("params.json"), &rows)?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    let cell = |v: Option<usize>| v.map_or_else(|| "-".to_owned(), |n| thousands(n as u64));
    println!(
        "{:<14} {:>12} {:>14} {:>22}",
        "model", "trainable", "non-trainable", "published (reference)"
    );
    for r in &rows {
        println!(
            "{:<14} {:>12} {:>14} {:>22}",
            r.model,
            cell(r.trainable),
            cell(r.non_trainable),
            thousands(r.published_trainable)
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_formatting() {
        let rows = rows();
        assert_eq!(rows[0].trainable, Some(11_762));
        assert_eq!(rows[1].trainable, Some(1_252_386));
        assert_eq!(rows[1].non_trainable, Some(512));
        assert_eq!(rows[2].trainable, None);
        assert_eq!(thousands(1_252_392), "1,252,392");
        assert_eq!(thousands(900), "900");
    }
}
