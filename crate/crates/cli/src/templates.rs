//! Named experiment templates compiled into the binary. The same files live
//! under `templates/` in the repository and double as schema documentation.

const TEMPLATES: &[(&str, &str)] = &[
    (
        "standalone-seqwrite-1m",
        include_str!("../../../templates/standalone-seqwrite-1m.toml"),
    ),
    (
        "standalone-randwrite-1m",
        include_str!("../../../templates/standalone-randwrite-1m.toml"),
    ),
    (
        "standalone-fiverandwrite-1m",
        include_str!("../../../templates/standalone-fiverandwrite-1m.toml"),
    ),
    (
        "standalone-fiveseqwrite-1m",
        include_str!("../../../templates/standalone-fiveseqwrite-1m.toml"),
    ),
    (
        "standalone-seqrw-16m",
        include_str!("../../../templates/standalone-seqrw-16m.toml"),
    ),
    (
        "standalone-wholerw-16m",
        include_str!("../../../templates/standalone-wholerw-16m.toml"),
    ),
    ("dynamic-6x300", include_str!("../../../templates/dynamic-6x300.toml")),
    ("multiclient-5", include_str!("../../../templates/multiclient-5.toml")),
    (
        "multiclient-contention",
        include_str!("../../../templates/multiclient-contention.toml"),
    ),
];

pub fn template_text(name: &str) -> Option<&'static str> {
    TEMPLATES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn template_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_templates_parse() {
        for name in template_names() {
            let text = template_text(name).unwrap();
            iopathtune_core::scenario::from_toml_str(text)
                .unwrap_or_else(|e| panic!("template {name}: {e}"));
        }
    }
}
