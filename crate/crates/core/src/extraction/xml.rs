//! Minimal element tree over quick-xml events.

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    /// Concatenated direct text and CDATA content.
    pub text: String,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub(crate) struct XmlSyntax(pub String);

fn open(start: &BytesStart<'_>) -> Result<Element, XmlSyntax> {
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for attr in start.attributes().with_checks(false) {
        let attr = attr.map_err(|e| XmlSyntax(e.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|e| XmlSyntax(e.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        ..Element::default()
    })
}

/// Parses one element starting at the beginning of `src` and returns it with
/// the number of bytes consumed.
pub(crate) fn parse_element(src: &str) -> Result<(Element, usize), XmlSyntax> {
    let mut reader = Reader::from_str(src);
    reader.config_mut().check_end_names = true;
    let mut stack: Vec<Element> = Vec::new();
    loop {
        let event = reader
            .read_event()
            .map_err(|e| XmlSyntax(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(s) => stack.push(open(&s)?),
            Event::Empty(s) => {
                let el = open(&s)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => return Ok((el, reader.buffer_position() as usize)),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| XmlSyntax("unexpected closing tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => return Ok((el, reader.buffer_position() as usize)),
                }
            }
            Event::Text(t) => {
                if let Some(top) = stack.last_mut() {
                    let s = t.decode().map_err(|e| XmlSyntax(e.to_string()))?;
                    top.text.push_str(&s);
                }
            }
            Event::CData(c) => {
                if let Some(top) = stack.last_mut() {
                    let s = c.decode().map_err(|e| XmlSyntax(e.to_string()))?;
                    top.text.push_str(&s);
                }
            }
            Event::GeneralRef(r) => {
                if let Some(top) = stack.last_mut() {
                    if let Some(ch) = r.resolve_char_ref().map_err(|e| XmlSyntax(e.to_string()))? {
                        top.text.push(ch);
                    } else {
                        let name = r.decode().map_err(|e| XmlSyntax(e.to_string()))?;
                        match resolve_predefined_entity(&name) {
                            Some(v) => top.text.push_str(v),
                            None => {
                                top.text.push('&');
                                top.text.push_str(&name);
                                top.text.push(';');
                            }
                        }
                    }
                }
            }
            Event::Eof => {
                return Err(XmlSyntax(match stack.last() {
                    Some(el) => format!("element <{}> is not closed", el.name),
                    None => "no element found".into(),
                }))
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_tree_with_text_cdata_and_entities() {
        let src = r#"<a x="1&amp;2"><b>t &lt; u</b><c/><d><![CDATA[<raw>]]></d></a> trailing"#;
        let (el, used) = parse_element(src).unwrap();
        assert_eq!(&src[used..], " trailing");
        assert_eq!(el.attr("x"), Some("1&2"));
        assert_eq!(el.child("b").unwrap().text, "t < u");
        assert!(el.child("c").unwrap().children.is_empty());
        assert_eq!(el.child("d").unwrap().text, "<raw>");
    }

    #[test]
    fn reports_unclosed_and_mismatched() {
        assert!(parse_element("<a><b></a>").is_err());
        assert!(parse_element("<a><b></b>").is_err());
    }
}
