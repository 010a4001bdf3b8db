//! Flattening of JATS full-text XML into screening text.
//!
//! Figures, tables, appendices and supplementary sections are dropped;
//! section titles survive as `##` heading lines so that statement locations
//! can still be attributed.

use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("malformed markup at byte {offset}: {message}")]
    Markup { offset: u64, message: String },
    #[error("document has no body text after stripping")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Element(Element),
    Text(String),
}

impl Element {
    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key || k.rsplit(':').next() == Some(key))
            .map(|(_, v)| v.as_str())
    }

    fn child(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.name == name)
    }

    fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    fn find(&self, name: &str) -> Option<&Element> {
        if self.name == name {
            return Some(self);
        }
        self.elements().find_map(|e| e.find(name))
    }

    fn find_all<'a>(&'a self, name: &str, out: &mut Vec<&'a Element>) {
        if self.name == name {
            out.push(self);
        }
        for e in self.elements() {
            e.find_all(name, out);
        }
    }
}

fn local(name: &[u8]) -> String {
    let s = String::from_utf8_lossy(name);
    match s.rsplit_once(':') {
        Some((_, l)) => l.to_string(),
        None => s.into_owned(),
    }
}

fn attributes(e: &quick_xml::events::BytesStart) -> Vec<(String, String)> {
    e.attributes()
        .filter_map(|a| a.ok())
        .map(|a| {
            (
                String::from_utf8_lossy(a.key.as_ref()).into_owned(),
                a.unescape_value().map(|v| v.into_owned()).unwrap_or_default(),
            )
        })
        .collect()
}

pub(crate) fn parse_tree(raw: &str) -> Result<Element, PreprocessError> {
    let mut reader = Reader::from_str(raw);
    let mut stack: Vec<Element> = vec![Element {
        name: "#document".into(),
        attrs: Vec::new(),
        children: Vec::new(),
    }];
    let markup = |reader: &Reader<&[u8]>, message: String| PreprocessError::Markup {
        offset: reader.error_position(),
        message,
    };
    loop {
        let event = reader
            .read_event()
            .map_err(|e| markup(&reader, e.to_string()))?;
        match event {
            Event::Start(e) => {
                let attrs = attributes(&e);
                stack.push(Element {
                    name: local(e.name().as_ref()),
                    attrs,
                    children: Vec::new(),
                });
            }
            Event::Empty(e) => {
                let attrs = attributes(&e);
                let el = Element {
                    name: local(e.name().as_ref()),
                    attrs,
                    children: Vec::new(),
                };
                stack.last_mut().unwrap().children.push(Node::Element(el));
            }
            Event::End(_) => {
                if stack.len() < 2 {
                    return Err(markup(&reader, "unbalanced end tag".into()));
                }
                let done = stack.pop().unwrap();
                stack.last_mut().unwrap().children.push(Node::Element(done));
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|e| markup(&reader, e.to_string()))?;
                push_text(stack.last_mut().unwrap(), &text);
            }
            Event::CData(c) => {
                let text = String::from_utf8_lossy(&c).into_owned();
                push_text(stack.last_mut().unwrap(), &text);
            }
            Event::GeneralRef(r) => {
                let name = r.decode().map_err(|e| markup(&reader, e.to_string()))?;
                let resolved = if r.is_char_ref() {
                    r.resolve_char_ref()
                        .map_err(|e| markup(&reader, e.to_string()))?
                        .map(|c| c.to_string())
                } else {
                    resolve_predefined_entity(&name).map(str::to_string)
                };
                // undeclared named entities (JATS DTD extras) degrade to a space
                let text = resolved.unwrap_or_else(|| " ".to_string());
                push_text(stack.last_mut().unwrap(), &text);
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if stack.len() != 1 {
        return Err(PreprocessError::Markup {
            offset: raw.len() as u64,
            message: format!("unclosed element <{}>", stack.last().unwrap().name),
        });
    }
    Ok(stack.pop().unwrap())
}

fn push_text(el: &mut Element, text: &str) {
    if let Some(Node::Text(prev)) = el.children.last_mut() {
        prev.push_str(text);
    } else {
        el.children.push(Node::Text(text.to_string()));
    }
}

const DROPPED: &[&str] = &[
    "fig",
    "fig-group",
    "table-wrap",
    "table-wrap-group",
    "table",
    "app",
    "app-group",
    "supplementary-material",
    "ref-list",
    "graphic",
    "media",
    "object-id",
    "label",
];

fn is_appendix_section(sec: &Element) -> bool {
    if sec
        .attr("sec-type")
        .is_some_and(|t| t.to_ascii_lowercase().contains("supplement"))
    {
        return true;
    }
    sec.child("title").is_some_and(|t| {
        let title = inline_text(t).to_lowercase();
        title.contains("appendix") || title.contains("appendices") || title.contains("supplement")
    })
}

fn inline_text(el: &Element) -> String {
    let mut raw = String::new();
    collect_inline(el, &mut raw);
    collapse_ws(&raw)
}

fn collect_inline(el: &Element, out: &mut String) {
    for n in &el.children {
        match n {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) if DROPPED.contains(&e.name.as_str()) => {}
            Node::Element(e) if e.name == "ext-link" || e.name == "uri" => {
                let mut inner = String::new();
                collect_inline(e, &mut inner);
                out.push_str(&inner);
                if let Some(href) = e.attr("href") {
                    if !inner.contains(href.trim()) {
                        out.push_str(" (");
                        out.push_str(href.trim());
                        out.push(')');
                    }
                }
            }
            Node::Element(e) => {
                // block children inside inline context still need separation
                if matches!(e.name.as_str(), "p" | "list-item" | "title") {
                    out.push(' ');
                }
                collect_inline(e, out);
            }
        }
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Renderer {
    blocks: Vec<String>,
}

impl Renderer {
    fn container(&mut self, el: &Element, depth: usize) {
        for child in el.elements() {
            self.block(child, depth);
        }
    }

    fn block(&mut self, el: &Element, depth: usize) {
        match el.name.as_str() {
            n if DROPPED.contains(&n) => {}
            "sec" | "ack" | "notes" | "fn-group" | "glossary" => {
                if el.name == "sec" && is_appendix_section(el) {
                    return;
                }
                let title = el.child("title").map(inline_text).unwrap_or_default();
                let title = if title.is_empty() {
                    match el.name.as_str() {
                        "ack" => "Acknowledgements".to_string(),
                        "fn-group" => "Notes".to_string(),
                        _ => String::new(),
                    }
                } else {
                    title
                };
                if !title.is_empty() {
                    self.blocks
                        .push(format!("{} {}", "#".repeat(depth.min(5) + 1), title));
                }
                for child in el.elements() {
                    if child.name != "title" {
                        self.block(child, depth + 1);
                    }
                }
            }
            "title" => {}
            "p" | "fn" | "disp-quote" | "statement" | "def-item" => {
                let has_blocks = el
                    .elements()
                    .any(|c| matches!(c.name.as_str(), "list" | "p" | "sec" | "table-wrap" | "fig"));
                if has_blocks {
                    // split mixed content: text runs become paragraphs, blocks recurse
                    let mut run = String::new();
                    for n in &el.children {
                        match n {
                            Node::Text(t) => run.push_str(t),
                            Node::Element(c)
                                if matches!(c.name.as_str(), "list" | "p" | "sec")
                                    || DROPPED.contains(&c.name.as_str()) =>
                            {
                                self.flush(&mut run);
                                self.block(c, depth);
                            }
                            Node::Element(c) => collect_inline(c, &mut run),
                        }
                    }
                    self.flush(&mut run);
                } else {
                    let text = inline_text(el);
                    if !text.is_empty() {
                        self.blocks.push(text);
                    }
                }
            }
            "list" => {
                for item in el.elements().filter(|e| e.name == "list-item") {
                    let text = inline_text(item);
                    if !text.is_empty() {
                        self.blocks.push(format!("- {text}"));
                    }
                }
            }
            "disp-formula" | "boxed-text" | "preformat" | "code" => {
                let text = inline_text(el);
                if !text.is_empty() {
                    self.blocks.push(text);
                }
            }
            _ => self.container(el, depth),
        }
    }

    fn flush(&mut self, run: &mut String) {
        let text = collapse_ws(run);
        if !text.is_empty() {
            self.blocks.push(text);
        }
        run.clear();
    }
}

/// Screening text for a JATS document: abstract(s), body and back-matter
/// sections, minus figures, tables, appendices and supplementary sections.
pub fn preprocess_fulltext(raw: &str) -> Result<String, PreprocessError> {
    let doc = parse_tree(raw)?;
    preprocess_tree(&doc)
}

pub(crate) fn preprocess_tree(doc: &Element) -> Result<String, PreprocessError> {
    let mut main = Renderer { blocks: Vec::new() };
    if let Some(body) = doc.find("body") {
        main.container(body, 1);
    }
    if let Some(back) = doc.find("back") {
        main.container(back, 1);
    }
    let has_content = main.blocks.iter().any(|b| !b.starts_with('#'));
    if !has_content {
        return Err(PreprocessError::EmptyText);
    }

    let mut blocks = Vec::new();
    if let Some(meta) = doc.find("article-meta") {
        let mut abstracts = Vec::new();
        meta.find_all("abstract", &mut abstracts);
        for a in abstracts {
            if a.attr("abstract-type").is_some_and(|t| t == "graphical" || t == "teaser") {
                continue;
            }
            let mut r = Renderer { blocks: Vec::new() };
            r.container(a, 2);
            if !r.blocks.is_empty() {
                blocks.push("## Abstract".to_string());
                blocks.extend(r.blocks);
            }
        }
    }
    blocks.extend(main.blocks);
    let mut out = blocks.join("\n\n");
    out.push('\n');
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArticleMeta {
    pub title: Option<String>,
    pub journal: Option<String>,
    pub publication_year: Option<i32>,
    pub pmid: Option<String>,
    pub pmcid: Option<String>,
}

/// Bibliographic fields from the front matter. Years outside
/// `[1900, max_year]` are dropped.
pub fn parse_article_meta(raw: &str, max_year: i32) -> Result<ArticleMeta, PreprocessError> {
    let doc = parse_tree(raw)?;
    Ok(meta_from_tree(&doc, max_year))
}

pub(crate) fn meta_from_tree(doc: &Element, max_year: i32) -> ArticleMeta {
    let mut meta = ArticleMeta::default();
    if let Some(j) = doc.find("journal-meta") {
        meta.journal = j.find("journal-title").map(inline_text).filter(|s| !s.is_empty());
    }
    let Some(am) = doc.find("article-meta") else {
        return meta;
    };
    meta.title = am.find("article-title").map(inline_text).filter(|s| !s.is_empty());
    for id in am.elements().filter(|e| e.name == "article-id") {
        let value = inline_text(id);
        match id.attr("pub-id-type") {
            Some("pmid") => meta.pmid = Some(value),
            Some("pmc") | Some("pmcid") => {
                meta.pmcid = Some(if value.starts_with("PMC") {
                    value
                } else {
                    format!("PMC{value}")
                })
            }
            _ => {}
        }
    }
    let mut dates = Vec::new();
    am.find_all("pub-date", &mut dates);
    let rank = |d: &Element| {
        let kind = d.attr("pub-type").or(d.attr("date-type")).unwrap_or("");
        match kind {
            "epub" | "pub" => 0,
            "ppub" => 1,
            "collection" => 2,
            _ => 3,
        }
    };
    dates.sort_by_key(|d| rank(d));
    meta.publication_year = dates
        .iter()
        .filter_map(|d| d.child("year"))
        .filter_map(|y| inline_text(y).parse::<i32>().ok())
        .find(|y| (1900..=max_year).contains(y));
    meta
}
