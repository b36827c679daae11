//! OpenCV Haar cascade XML, both the current `opencv-cascade-classifier`
//! schema and the legacy `opencv-haar-classifier` one.

use std::path::Path;

use roxmltree::{Document, Node};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarRect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<HaarRect>,
    pub tilted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: Child,
    pub right: Child,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub leaves: Vec<f64>,
}

impl DecisionTree {
    /// Walks from the root; `feature_value(node)` is compared as `value < threshold`.
    pub fn eval(&self, mut feature_value: impl FnMut(&TreeNode) -> bool) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            let next = if feature_value(node) { node.left } else { node.right };
            match next {
                Child::Leaf(l) => return self.leaves[l],
                Child::Node(n) => idx = n,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeStage {
    pub threshold: f64,
    pub trees: Vec<DecisionTree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub width: usize,
    pub height: usize,
    pub stages: Vec<CascadeStage>,
    pub features: Vec<HaarFeature>,
    digest: [u8; 32],
}

impl Cascade {
    pub fn from_xml(text: &str) -> Result<Self> {
        let doc = Document::parse(text).map_err(|e| Error::Parse(e.to_string()))?;
        let storage = doc.root_element();
        if storage.tag_name().name() != "opencv_storage" {
            return Err(Error::Parse(format!(
                "root element is <{}>, expected <opencv_storage>",
                storage.tag_name().name()
            )));
        }
        let top = storage
            .children()
            .find(Node::is_element)
            .ok_or_else(|| Error::Parse("empty <opencv_storage>".into()))?;
        let mut cascade = match top.attribute("type_id") {
            Some("opencv-cascade-classifier") => parse_current(top)?,
            Some("opencv-haar-classifier") => parse_legacy(top)?,
            _ if child(top, "stageType").is_ok() => parse_current(top)?,
            _ if child(top, "size").is_ok() => parse_legacy(top)?,
            other => {
                return Err(Error::UnsupportedCascade(format!(
                    "unknown classifier type {other:?} on <{}>",
                    top.tag_name().name()
                )))
            }
        };
        cascade.digest = Sha256::digest(text.as_bytes()).into();
        cascade.check()?;
        Ok(cascade)
    }

    /// SHA-256 of the source XML.
    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn has_tilted(&self) -> bool {
        self.features.iter().any(|f| f.tilted)
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parse("zero detector window".into()));
        }
        if self.width != self.height {
            return Err(Error::UnsupportedCascade(format!(
                "non-square base window {}x{}",
                self.width, self.height
            )));
        }
        if self.stages.is_empty() {
            return Err(Error::Parse("cascade has no stages".into()));
        }
        for (si, stage) in self.stages.iter().enumerate() {
            if stage.trees.is_empty() {
                return Err(Error::Parse(format!("stage {si} has no weak classifiers")));
            }
            for tree in &stage.trees {
                if tree.nodes.is_empty() {
                    return Err(Error::Parse(format!("stage {si} has an empty tree")));
                }
                for (ni, node) in tree.nodes.iter().enumerate() {
                    if node.feature >= self.features.len() {
                        return Err(Error::Parse(format!(
                            "stage {si} references feature {} of {}",
                            node.feature,
                            self.features.len()
                        )));
                    }
                    for c in [node.left, node.right] {
                        match c {
                            Child::Leaf(l) if l >= tree.leaves.len() => {
                                return Err(Error::Parse(format!("stage {si}: leaf {l} out of range")))
                            }
                            Child::Node(n) if n <= ni || n >= tree.nodes.len() => {
                                return Err(Error::Parse(format!("stage {si}: bad child node {n}")))
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        let (w, h) = (self.width as i32, self.height as i32);
        for (fi, f) in self.features.iter().enumerate() {
            if f.rects.is_empty() || f.rects.len() > 3 {
                return Err(Error::Parse(format!("feature {fi} has {} rects", f.rects.len())));
            }
            for r in &f.rects {
                let inside = if f.tilted {
                    r.x - r.h >= 0 && r.x + r.w <= w && r.y >= 0 && r.y + r.w + r.h <= h
                } else {
                    r.x >= 0 && r.y >= 0 && r.x + r.w <= w && r.y + r.h <= h
                };
                if r.w <= 0 || r.h <= 0 || !inside {
                    return Err(Error::Parse(format!("feature {fi} rect {r:?} outside window")));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_cascade(path: impl AsRef<Path>) -> Result<Cascade> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Cascade::from_xml(&text)
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
        .ok_or_else(|| Error::Parse(format!("<{}> lacks <{name}>", node.tag_name().name())))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element() && c.tag_name().name() == "_")
}

fn text<'a>(node: Node<'a, '_>) -> &'a str {
    node.text().unwrap_or("").trim()
}

fn numbers(node: Node<'_, '_>) -> Result<Vec<f64>> {
    node.descendants()
        .filter(|n| n.is_text())
        .flat_map(|n| n.text().unwrap_or("").split_whitespace())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {tok:?}")))
        })
        .collect()
}

fn number<T: std::str::FromStr>(node: Node<'_, '_>, name: &str) -> Result<T> {
    let c = child(node, name)?;
    text(c)
        .parse()
        .map_err(|_| Error::Parse(format!("bad <{name}> value {:?}", text(c))))
}

fn parse_feature(node: Node<'_, '_>) -> Result<HaarFeature> {
    let rects = items(child(node, "rects")?)
        .map(|r| {
            let v = numbers(r)?;
            if v.len() != 5 {
                return Err(Error::Parse(format!("rect needs 5 values, got {v:?}")));
            }
            Ok(HaarRect {
                x: v[0] as i32,
                y: v[1] as i32,
                w: v[2] as i32,
                h: v[3] as i32,
                weight: v[4],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tilted = match child(node, "tilted") {
        Ok(t) => text(t) != "0",
        Err(_) => false,
    };
    Ok(HaarFeature { rects, tilted })
}

fn parse_current(top: Node<'_, '_>) -> Result<Cascade> {
    let stage_type = text(child(top, "stageType")?);
    if stage_type != "BOOST" {
        return Err(Error::UnsupportedCascade(format!("stage type {stage_type}")));
    }
    let feature_type = text(child(top, "featureType")?);
    if feature_type != "HAAR" {
        return Err(Error::UnsupportedCascade(format!("feature type {feature_type}")));
    }
    let width: usize = number(top, "width")?;
    let height: usize = number(top, "height")?;
    let mut stages = Vec::new();
    for s in items(child(top, "stages")?) {
        let threshold: f64 = number(s, "stageThreshold")?;
        let mut trees = Vec::new();
        for wc in items(child(s, "weakClassifiers")?) {
            let internal = numbers(child(wc, "internalNodes")?)?;
            let leaves = numbers(child(wc, "leafValues")?)?;
            if internal.is_empty() || internal.len() % 4 != 0 {
                return Err(Error::Parse(format!(
                    "internalNodes length {} is not a multiple of 4",
                    internal.len()
                )));
            }
            let to_child = |v: f64| {
                let v = v as i64;
                if v > 0 {
                    Child::Node(v as usize)
                } else {
                    Child::Leaf((-v) as usize)
                }
            };
            let nodes = internal
                .chunks_exact(4)
                .map(|n| {
                    if n[2] < 0.0 {
                        return Err(Error::Parse(format!("negative feature index {}", n[2])));
                    }
                    Ok(TreeNode {
                        left: to_child(n[0]),
                        right: to_child(n[1]),
                        feature: n[2] as usize,
                        threshold: n[3],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            trees.push(DecisionTree { nodes, leaves });
        }
        if let Ok(declared) = number::<usize>(s, "maxWeakCount") {
            if declared != trees.len() {
                return Err(Error::Parse(format!(
                    "stage declares {declared} weak classifiers, found {}",
                    trees.len()
                )));
            }
        }
        stages.push(CascadeStage { threshold, trees });
    }
    if let Ok(declared) = number::<usize>(top, "stageNum") {
        if declared != stages.len() {
            return Err(Error::Parse(format!(
                "cascade declares {declared} stages, found {}",
                stages.len()
            )));
        }
    }
    let features = items(child(top, "features")?)
        .map(parse_feature)
        .collect::<Result<Vec<_>>>()?;
    Ok(Cascade {
        width,
        height,
        stages,
        features,
        digest: [0; 32],
    })
}

fn parse_legacy(top: Node<'_, '_>) -> Result<Cascade> {
    let size = numbers(child(top, "size")?)?;
    let [width, height] = size[..] else {
        return Err(Error::Parse(format!("bad <size> {size:?}")));
    };
    let mut stages = Vec::new();
    let mut features = Vec::new();
    for (si, s) in items(child(top, "stages")?).enumerate() {
        let threshold: f64 = number(s, "stage_threshold")?;
        let parent: i64 = number(s, "parent").unwrap_or(si as i64 - 1);
        let next: i64 = number(s, "next").unwrap_or(-1);
        if parent != si as i64 - 1 || next != -1 {
            return Err(Error::UnsupportedCascade(format!(
                "tree-structured cascade (stage {si} parent {parent} next {next})"
            )));
        }
        let mut trees = Vec::new();
        for t in items(child(s, "trees")?) {
            let mut nodes = Vec::new();
            let mut leaves = Vec::new();
            for n in items(t) {
                features.push(parse_feature(child(n, "feature")?)?);
                let threshold: f64 = number(n, "threshold")?;
                let mut side = |val: &str, node: &str| -> Result<Child> {
                    if let Ok(v) = number::<f64>(n, val) {
                        leaves.push(v);
                        Ok(Child::Leaf(leaves.len() - 1))
                    } else {
                        Ok(Child::Node(number::<usize>(n, node)?))
                    }
                };
                let left = side("left_val", "left_node")?;
                let right = side("right_val", "right_node")?;
                nodes.push(TreeNode {
                    feature: features.len() - 1,
                    threshold,
                    left,
                    right,
                });
            }
            trees.push(DecisionTree { nodes, leaves });
        }
        stages.push(CascadeStage { threshold, trees });
    }
    Ok(Cascade {
        width: width as usize,
        height: height as usize,
        stages,
        features,
        digest: [0; 32],
    })
}
