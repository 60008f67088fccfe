//! Graph export for Gephi and other network tools: GEXF 1.3, GraphML and JSON.

use std::fmt;
use std::str::FromStr;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};
use sckg_core::graph::GraphView;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unsupported export format {0:?} (expected gexf, graphml or json)")]
    UnsupportedFormat(String),
    #[error("the selected view has no nodes")]
    EmptyView,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("xml: {0}")]
    Xml(#[from] quick_xml::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Gexf,
    GraphMl,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Gexf => "gexf",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gexf" => Ok(ExportFormat::Gexf),
            "graphml" => Ok(ExportFormat::GraphMl),
            "json" => Ok(ExportFormat::Json),
            _ => Err(ExportError::UnsupportedFormat(s.into())),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Serialize `view`. An empty view is an error unless `allow_empty`.
pub fn export_graph(view: &GraphView, format: ExportFormat, allow_empty: bool) -> Result<String, ExportError> {
    if view.is_empty() && !allow_empty {
        return Err(ExportError::EmptyView);
    }
    match format {
        ExportFormat::Gexf => gexf(view),
        ExportFormat::GraphMl => graphml(view),
        ExportFormat::Json => Ok(serde_json::to_string_pretty(view).expect("view serializes") + "\n"),
    }
}

type W = Writer<Vec<u8>>;

fn start(w: &mut W, name: &str, attrs: &[(&str, &str)]) -> Result<(), ExportError> {
    w.write_event(Event::Start(BytesStart::new(name).with_attributes(attrs.iter().copied())))?;
    Ok(())
}

fn empty(w: &mut W, name: &str, attrs: &[(&str, &str)]) -> Result<(), ExportError> {
    w.write_event(Event::Empty(BytesStart::new(name).with_attributes(attrs.iter().copied())))?;
    Ok(())
}

fn end(w: &mut W, name: &str) -> Result<(), ExportError> {
    w.write_event(Event::End(BytesEnd::new(name)))?;
    Ok(())
}

fn text_element(w: &mut W, name: &str, attrs: &[(&str, &str)], text: &str) -> Result<(), ExportError> {
    start(w, name, attrs)?;
    w.write_event(Event::Text(BytesText::new(text)))?;
    end(w, name)
}

fn finish(w: W) -> String {
    let mut s = String::from_utf8(w.into_inner()).expect("writer emits utf-8");
    s.push('\n');
    s
}

fn writer() -> Result<W, ExportError> {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    Ok(w)
}

fn gexf(view: &GraphView) -> Result<String, ExportError> {
    let mut w = writer()?;
    start(
        &mut w,
        "gexf",
        &[
            ("xmlns", "http://gexf.net/1.3"),
            ("xmlns:xsi", "http://www.w3.org/2001/XMLSchema-instance"),
            ("xsi:schemaLocation", "http://gexf.net/1.3 http://gexf.net/1.3/gexf.xsd"),
            ("version", "1.3"),
        ],
    )?;
    start(&mut w, "meta", &[])?;
    text_element(&mut w, "creator", &[], concat!("sckg ", env!("CARGO_PKG_VERSION")))?;
    end(&mut w, "meta")?;
    start(&mut w, "graph", &[("defaultedgetype", "directed"), ("mode", "static")])?;
    start(&mut w, "attributes", &[("class", "node")])?;
    empty(&mut w, "attribute", &[("id", "kind"), ("title", "kind"), ("type", "string")])?;
    empty(&mut w, "attribute", &[("id", "jurisdiction"), ("title", "jurisdiction"), ("type", "string")])?;
    end(&mut w, "attributes")?;
    start(&mut w, "attributes", &[("class", "edge")])?;
    empty(&mut w, "attribute", &[("id", "kind"), ("title", "kind"), ("type", "string")])?;
    empty(&mut w, "attribute", &[("id", "status"), ("title", "status"), ("type", "string")])?;
    end(&mut w, "attributes")?;

    start(&mut w, "nodes", &[])?;
    for n in &view.nodes {
        let id = n.id.to_string();
        start(&mut w, "node", &[("id", &id), ("label", &n.name)])?;
        start(&mut w, "attvalues", &[])?;
        empty(&mut w, "attvalue", &[("for", "kind"), ("value", n.kind.as_str())])?;
        if let Some(j) = &n.jurisdiction {
            empty(&mut w, "attvalue", &[("for", "jurisdiction"), ("value", j)])?;
        }
        end(&mut w, "attvalues")?;
        end(&mut w, "node")?;
    }
    end(&mut w, "nodes")?;

    start(&mut w, "edges", &[])?;
    for e in &view.edges {
        let (id, s, t) = (e.id.to_string(), e.source.to_string(), e.target.to_string());
        start(&mut w, "edge", &[("id", &id), ("source", &s), ("target", &t), ("label", e.kind.as_str())])?;
        start(&mut w, "attvalues", &[])?;
        empty(&mut w, "attvalue", &[("for", "kind"), ("value", e.kind.as_str())])?;
        empty(&mut w, "attvalue", &[("for", "status"), ("value", e.status.as_str())])?;
        end(&mut w, "attvalues")?;
        end(&mut w, "edge")?;
    }
    end(&mut w, "edges")?;
    end(&mut w, "graph")?;
    end(&mut w, "gexf")?;
    Ok(finish(w))
}

fn graphml(view: &GraphView) -> Result<String, ExportError> {
    let mut w = writer()?;
    start(
        &mut w,
        "graphml",
        &[
            ("xmlns", "http://graphml.graphdrawing.org/xmlns"),
            ("xmlns:xsi", "http://www.w3.org/2001/XMLSchema-instance"),
            (
                "xsi:schemaLocation",
                "http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd",
            ),
        ],
    )?;
    let keys = [
        ("name", "node", "name"),
        ("node_kind", "node", "kind"),
        ("jurisdiction", "node", "jurisdiction"),
        ("edge_kind", "edge", "kind"),
        ("status", "edge", "status"),
    ];
    for (id, target, name) in keys {
        empty(
            &mut w,
            "key",
            &[("id", id), ("for", target), ("attr.name", name), ("attr.type", "string")],
        )?;
    }
    start(&mut w, "graph", &[("id", "G"), ("edgedefault", "directed")])?;
    for n in &view.nodes {
        let id = n.id.to_string();
        start(&mut w, "node", &[("id", &id)])?;
        text_element(&mut w, "data", &[("key", "name")], &n.name)?;
        text_element(&mut w, "data", &[("key", "node_kind")], n.kind.as_str())?;
        if let Some(j) = &n.jurisdiction {
            text_element(&mut w, "data", &[("key", "jurisdiction")], j)?;
        }
        end(&mut w, "node")?;
    }
    for e in &view.edges {
        let (id, s, t) = (e.id.to_string(), e.source.to_string(), e.target.to_string());
        start(&mut w, "edge", &[("id", &id), ("source", &s), ("target", &t)])?;
        text_element(&mut w, "data", &[("key", "edge_kind")], e.kind.as_str())?;
        text_element(&mut w, "data", &[("key", "status")], e.status.as_str())?;
        end(&mut w, "edge")?;
    }
    end(&mut w, "graph")?;
    end(&mut w, "graphml")?;
    Ok(finish(w))
}

/// Count `node` and `edge` elements in an exported document.
pub fn parse_counts(xml: &str) -> Result<(usize, usize), ExportError> {
    let mut reader = Reader::from_str(xml);
    let (mut nodes, mut edges) = (0, 0);
    loop {
        match reader.read_event()? {
            Event::Start(e) | Event::Empty(e) => match e.name().as_ref() {
                b"node" => nodes += 1,
                b"edge" => edges += 1,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok((nodes, edges))
}
