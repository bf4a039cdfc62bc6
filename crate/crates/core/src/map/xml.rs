//! Minimal XML emission helpers and attribute access for the parsers.

use std::fmt::Write;

use roxmltree::Node;

use super::{Attributes, Id, MapError, XmlAttrs};

pub(crate) fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // literal whitespace in attribute values is normalised away by readers
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn push_attr(out: &mut String, key: &str, value: &str) {
    let _ = write!(out, " {}=\"{}\"", key, escape(value));
}

pub(crate) fn push_tags(out: &mut String, tags: &Attributes) {
    for (k, v) in tags {
        let _ = writeln!(out, "    <tag k=\"{}\" v=\"{}\"/>", escape(k), escape(v));
    }
}

pub(crate) fn write_header(out: &mut String, root: &XmlAttrs) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm");
    for (k, v) in root {
        push_attr(out, k, v);
    }
    out.push_str(">\n");
}

pub(crate) fn line_of(node: Node) -> u32 {
    node.document().text_pos_at(node.range().start).row
}

pub(crate) fn required<'a>(node: Node<'a, '_>, name: &str) -> Result<&'a str, MapError> {
    node.attribute(name).ok_or_else(|| MapError::Parse {
        line: line_of(node),
        message: format!("<{}> lacks attribute '{}'", node.tag_name().name(), name),
    })
}

pub(crate) fn parse_num<T: std::str::FromStr>(node: Node, name: &str, raw: &str) -> Result<T, MapError> {
    raw.trim().parse().map_err(|_| MapError::Parse {
        line: line_of(node),
        message: format!("attribute '{}' has invalid value '{}'", name, raw),
    })
}

pub(crate) fn id_of(node: Node) -> Result<Id, MapError> {
    let raw = required(node, "id")?;
    parse_num(node, "id", raw)
}

/// Collect `<tag k v>` children. A repeated key keeps the last value.
pub(crate) fn tags_of(node: Node) -> Result<Attributes, MapError> {
    let mut tags = Attributes::new();
    for child in node.children().filter(|c| c.has_tag_name("tag")) {
        let k = required(child, "k")?;
        let v = required(child, "v")?;
        tags.insert(k.to_owned(), v.to_owned());
    }
    Ok(tags)
}

/// XML attributes of `node` except the names in `skip`.
pub(crate) fn extra_attrs(node: Node, skip: &[&str]) -> XmlAttrs {
    node.attributes()
        .filter(|a| a.namespace().is_none() && !skip.contains(&a.name()))
        .map(|a| (a.name().to_owned(), a.value().to_owned()))
        .collect()
}
