use std::collections::BTreeMap;

use facekit_cli::cli::{command, SUBCOMMANDS};
use facekit_cli::KEYS;

fn shown(default: &str) -> &str {
    if default.is_empty() {
        "none"
    } else {
        default
    }
}

#[test]
fn help_lists_every_flag_with_its_default() {
    for &(name, _, flags) in SUBCOMMANDS {
        let mut sub = command().find_subcommand(name).unwrap().clone();
        let help = sub.render_long_help().to_string();
        for &(flag, key) in flags {
            let spec = KEYS.iter().find(|k| k.key == key).unwrap();
            let line = help
                .lines()
                .skip_while(|l| !l.contains(&format!("--{flag} <VALUE>")))
                .take(3)
                .collect::<String>();
            assert!(!line.is_empty(), "{name}: --{flag} missing from help");
            assert!(
                line.contains(&format!("[default: {}]", shown(spec.default))),
                "{name}: --{flag} help lacks default {:?}: {line}",
                spec.default
            );
        }
    }
}

#[test]
fn every_key_is_reachable_from_a_flag() {
    for k in KEYS {
        let reachable =
            k.key == "seed" || SUBCOMMANDS.iter().any(|s| s.2.iter().any(|f| f.1 == k.key));
        assert!(reachable, "{} has no flag", k.key);
    }
}

#[test]
fn reference_doc_matches_the_key_table() {
    let doc = include_str!("../../../docs/cli.md");
    let rows: BTreeMap<&str, &str> = doc
        .lines()
        .filter_map(|l| {
            let cells: Vec<&str> = l.split('|').map(str::trim).collect();
            (cells.len() >= 4 && cells[1].starts_with('`') && cells[1] != "`key`")
                .then(|| (cells[1].trim_matches('`'), cells[2].trim_matches('`')))
        })
        .collect();
    assert_eq!(
        rows.len(),
        KEYS.len(),
        "docs/cli.md and the key table differ in size"
    );
    for k in KEYS {
        assert_eq!(
            rows.get(k.key).copied(),
            Some(k.default),
            "docs/cli.md entry for {}",
            k.key
        );
    }
}
