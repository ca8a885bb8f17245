//! Deterministic layout and SVG emission, with an editable scene graph.
//!
//! The scene is the editable middle ground between a diagram graph and its
//! raster image: placed shapes plus routed arrows. Scene edits (direction
//! flips, node moves, arrow reversal/removal) are the primitives behind the
//! hard positive and negative image rules.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{node_id_index, DiagramGraph, Edge, FlowDirection, Node, NodeKind};

/// Canvas padding around the shape bounding box, in scene units.
const MARGIN: f64 = 40.0;
/// Horizontal center-to-center spacing floor within a layer.
const NODE_SPACING: f64 = 160.0;
/// Vertical center-to-center spacing between layers.
const LAYER_SPACING: f64 = 120.0;
/// Minimum free space between shape bounding boxes.
const OVERLAP_MARGIN: f64 = 8.0;
/// How far above the shapes a same-layer elbow route runs.
const ELBOW_LIFT: f64 = 60.0;

const SHAPE_HEIGHT: f64 = 36.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("scene has no shape for id {id}")]
    UnknownId { id: String },
    #[error("scene has no arrow at index {index}")]
    UnknownArrowIndex { index: usize },
    #[error("moving {id} cannot satisfy the overlap margin even after halving the delta")]
    OverlapUnresolvable { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeForm {
    Rectangle,
    Diamond,
}

impl ShapeForm {
    fn for_kind(kind: NodeKind) -> Self {
        match kind {
            NodeKind::Statement => ShapeForm::Rectangle,
            NodeKind::Question => ShapeForm::Diamond,
        }
    }

    fn kind(self) -> NodeKind {
        match self {
            ShapeForm::Rectangle => NodeKind::Statement,
            ShapeForm::Diamond => NodeKind::Question,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedShape {
    pub node_id: String,
    pub form: ShapeForm,
    pub center: (f64, f64),
    pub size: (f64, f64),
    pub label: String,
}

impl PlacedShape {
    fn half(&self) -> (f64, f64) {
        (self.size.0 / 2.0, self.size.1 / 2.0)
    }
}

/// Arrowheads are always drawn at the `to` end; reversing an arrow swaps its
/// endpoints, which moves the head with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrowHead {
    #[default]
    ToEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrow {
    pub from_id: String,
    pub to_id: String,
    pub waypoints: Vec<(f64, f64)>,
    pub head_at: ArrowHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub direction: FlowDirection,
    pub shapes: Vec<PlacedShape>,
    pub arrows: Vec<Arrow>,
    /// Width and height of the rendered canvas in scene units.
    pub canvas: (f64, f64),
}

/// One reversible edit on a scene. `FlipDirection` and `MoveNode` preserve
/// the arrow set (hard-positive edits); `ReverseArrow` and `RemoveArrow`
/// change it (hard-negative edits).
#[derive(Debug, Clone, PartialEq)]
pub enum SceneEdit {
    FlipDirection,
    MoveNode { node_id: String, dx: f64, dy: f64 },
    ReverseArrow(usize),
    RemoveArrow(usize),
}

fn shape_width(label: &str) -> f64 {
    12.0 + 7.0 * label.chars().count() as f64
}

/// Mark edges that close a cycle (ignored for layering only). DFS in node
/// order, so the marking is deterministic.
fn cycle_edges(node_count: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut out_edges = vec![Vec::new(); node_count];
    for (idx, &(from, _)) in edges.iter().enumerate() {
        out_edges[from].push(idx);
    }
    let mut state = vec![0u8; node_count]; // 0 new, 1 open, 2 done
    let mut is_cycle = vec![false; edges.len()];

    fn visit(
        node: usize,
        out_edges: &[Vec<usize>],
        edges: &[(usize, usize)],
        state: &mut [u8],
        is_cycle: &mut [bool],
    ) {
        state[node] = 1;
        for &edge_idx in &out_edges[node] {
            let to = edges[edge_idx].1;
            match state[to] {
                0 => visit(to, out_edges, edges, state, is_cycle),
                1 => is_cycle[edge_idx] = true,
                _ => {}
            }
        }
        state[node] = 2;
    }

    for node in 0..node_count {
        if state[node] == 0 {
            visit(node, &out_edges, edges, &mut state, &mut is_cycle);
        }
    }
    is_cycle
}

/// Longest-path layer per node over the acyclic edge subset.
fn assign_layers(node_count: usize, edges: &[(usize, usize)], is_cycle: &[bool]) -> Vec<usize> {
    let mut indegree = vec![0usize; node_count];
    let mut outgoing = vec![Vec::new(); node_count];
    for (idx, &(from, to)) in edges.iter().enumerate() {
        if is_cycle[idx] {
            continue;
        }
        outgoing[from].push(to);
        indegree[to] += 1;
    }
    let mut queue: VecDeque<usize> =
        (0..node_count).filter(|&i| indegree[i] == 0).collect();
    let mut layers = vec![0usize; node_count];
    while let Some(node) = queue.pop_front() {
        for &to in &outgoing[node] {
            layers[to] = layers[to].max(layers[node] + 1);
            indegree[to] -= 1;
            if indegree[to] == 0 {
                queue.push_back(to);
            }
        }
    }
    layers
}

/// Layered layout: longest-path layering, fixed spacing, nodes within a
/// layer ordered by node id, layers centered horizontally. Deterministic
/// for a fixed graph.
pub fn layout(g: &DiagramGraph) -> SceneGraph {
    debug_assert!(g.is_valid(), "layout requires a valid graph: {:?}", g.validate());
    let index: BTreeMap<&str, usize> =
        g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let edge_indices: Vec<(usize, usize)> = g
        .edges
        .iter()
        .map(|e| (index[e.from_id.as_str()], index[e.to_id.as_str()]))
        .collect();
    let is_cycle = cycle_edges(g.nodes.len(), &edge_indices);
    let layers = assign_layers(g.nodes.len(), &edge_indices, &is_cycle);

    let layer_count = layers.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); layer_count];
    for (node, &layer) in layers.iter().enumerate() {
        members[layer].push(node);
    }
    for layer in &mut members {
        layer.sort_by_key(|&i| node_id_index(&g.nodes[i].id).unwrap_or(u64::MAX));
    }

    let mut centers: Vec<(f64, f64)> = vec![(0.0, 0.0); g.nodes.len()];
    for (layer_idx, layer) in members.iter().enumerate() {
        let widest = layer
            .iter()
            .map(|&i| shape_width(&g.nodes[i].label))
            .fold(0.0, f64::max);
        let spacing = NODE_SPACING.max(widest + OVERLAP_MARGIN);
        let mid = (layer.len() as f64 - 1.0) * spacing / 2.0;
        let y = match g.direction {
            FlowDirection::TopDown => layer_idx as f64 * LAYER_SPACING,
            FlowDirection::BottomUp => -(layer_idx as f64) * LAYER_SPACING,
        };
        for (pos, &node) in layer.iter().enumerate() {
            centers[node] = (pos as f64 * spacing - mid, y);
        }
    }

    // Shift so the shape bounding box starts at (MARGIN, MARGIN).
    let mut shapes: Vec<PlacedShape> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| PlacedShape {
            node_id: node.id.clone(),
            form: ShapeForm::for_kind(node.kind),
            center: centers[i],
            size: (shape_width(&node.label), SHAPE_HEIGHT),
            label: node.label.clone(),
        })
        .collect();
    let (min_x, min_y, _, _) = shape_bounds(&shapes);
    for shape in &mut shapes {
        shape.center.0 += MARGIN - min_x;
        shape.center.1 += MARGIN - min_y;
    }

    let mut scene = SceneGraph {
        direction: g.direction,
        shapes,
        arrows: Vec::new(),
        canvas: (0.0, 0.0),
    };
    scene.arrows = g
        .edges
        .iter()
        .map(|e| route_arrow(&scene, &e.from_id, &e.to_id))
        .collect();
    update_canvas(&mut scene);
    scene
}

fn shape_bounds(shapes: &[PlacedShape]) -> (f64, f64, f64, f64) {
    if shapes.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mut bounds = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in shapes {
        let (hw, hh) = s.half();
        bounds.0 = bounds.0.min(s.center.0 - hw);
        bounds.1 = bounds.1.min(s.center.1 - hh);
        bounds.2 = bounds.2.max(s.center.0 + hw);
        bounds.3 = bounds.3.max(s.center.1 + hh);
    }
    bounds
}

fn update_canvas(scene: &mut SceneGraph) {
    let (min_x, min_y, max_x, max_y) = shape_bounds(&scene.shapes);
    scene.canvas = (max_x - min_x + 2.0 * MARGIN, max_y - min_y + 2.0 * MARGIN);
}

fn shape_of<'a>(scene: &'a SceneGraph, id: &str) -> Option<&'a PlacedShape> {
    scene.shapes.iter().find(|s| s.node_id == id)
}

/// Distance along `d` from the shape center to its border.
fn border_t(shape: &PlacedShape, d: (f64, f64)) -> f64 {
    let (hw, hh) = shape.half();
    let (adx, ady) = (d.0.abs(), d.1.abs());
    match shape.form {
        ShapeForm::Rectangle => {
            let tx = if adx > 1e-12 { hw / adx } else { f64::INFINITY };
            let ty = if ady > 1e-12 { hh / ady } else { f64::INFINITY };
            tx.min(ty)
        }
        ShapeForm::Diamond => {
            let denom = adx / hw + ady / hh;
            if denom > 1e-12 {
                1.0 / denom
            } else {
                0.0
            }
        }
    }
}

fn route_arrow(scene: &SceneGraph, from_id: &str, to_id: &str) -> Arrow {
    let from = shape_of(scene, from_id).expect("arrow source shape");
    let to = shape_of(scene, to_id).expect("arrow target shape");
    let (fc, tc) = (from.center, to.center);
    let d = (tc.0 - fc.0, tc.1 - fc.1);
    let length = (d.0 * d.0 + d.1 * d.1).sqrt();

    let waypoints = if (fc.1 - tc.1).abs() <= 1e-9 && length > 1e-9 {
        // Same layer: orthogonal elbow over the top of both shapes.
        let rail = fc.1 - from.half().1 - ELBOW_LIFT;
        vec![
            (fc.0, fc.1 - from.half().1),
            (fc.0, rail),
            (tc.0, rail),
            (tc.0, tc.1 - to.half().1),
        ]
    } else if length <= 1e-9 {
        vec![fc, tc]
    } else {
        let tf = border_t(from, d);
        let tt = border_t(to, d);
        vec![
            (fc.0 + d.0 * tf, fc.1 + d.1 * tf),
            (tc.0 - d.0 * tt, tc.1 - d.1 * tt),
        ]
    };
    Arrow {
        from_id: from_id.to_string(),
        to_id: to_id.to_string(),
        waypoints,
        head_at: ArrowHead::ToEnd,
    }
}

fn reroute_incident(scene: &mut SceneGraph, node_id: Option<&str>) {
    let routes: Vec<Option<Arrow>> = scene
        .arrows
        .iter()
        .map(|a| {
            if node_id.is_none_or(|id| a.from_id == id || a.to_id == id) {
                Some(route_arrow(scene, &a.from_id, &a.to_id))
            } else {
                None
            }
        })
        .collect();
    for (arrow, route) in scene.arrows.iter_mut().zip(routes) {
        if let Some(route) = route {
            *arrow = route;
        }
    }
}

fn separation_ok(a: &PlacedShape, b: &PlacedShape) -> bool {
    let sep_x = (a.center.0 - b.center.0).abs() - (a.size.0 + b.size.0) / 2.0;
    let sep_y = (a.center.1 - b.center.1).abs() - (a.size.1 + b.size.1) / 2.0;
    sep_x.max(sep_y) >= OVERLAP_MARGIN - 1e-9
}

/// Apply one edit, returning the edited scene; the input is unchanged.
///
/// `MoveNode` retries with a halved delta up to three times when the move
/// would break the overlap margin.
pub fn apply_scene_edit(scene: &SceneGraph, edit: &SceneEdit) -> Result<SceneGraph, RenderError> {
    let mut out = scene.clone();
    match edit {
        SceneEdit::FlipDirection => {
            out.direction = out.direction.flipped();
            if !out.shapes.is_empty() {
                let min_cy = out.shapes.iter().map(|s| s.center.1).fold(f64::INFINITY, f64::min);
                let max_cy =
                    out.shapes.iter().map(|s| s.center.1).fold(f64::NEG_INFINITY, f64::max);
                let pivot = min_cy + max_cy;
                for shape in &mut out.shapes {
                    shape.center.1 = pivot - shape.center.1;
                }
            }
            reroute_incident(&mut out, None);
        }
        SceneEdit::MoveNode { node_id, dx, dy } => {
            let idx = out
                .shapes
                .iter()
                .position(|s| s.node_id == *node_id)
                .ok_or_else(|| RenderError::UnknownId { id: node_id.clone() })?;
            let mut placed = false;
            for halving in 0..4 {
                let scale = 0.5f64.powi(halving);
                let candidate =
                    (out.shapes[idx].center.0 + dx * scale, out.shapes[idx].center.1 + dy * scale);
                let mut probe = out.shapes[idx].clone();
                probe.center = candidate;
                let clear = out
                    .shapes
                    .iter()
                    .enumerate()
                    .all(|(j, other)| j == idx || separation_ok(&probe, other));
                if clear {
                    out.shapes[idx].center = candidate;
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(RenderError::OverlapUnresolvable { id: node_id.clone() });
            }
            reroute_incident(&mut out, Some(node_id));
        }
        SceneEdit::ReverseArrow(index) => {
            let arrow = out
                .arrows
                .get(*index)
                .ok_or(RenderError::UnknownArrowIndex { index: *index })?;
            let (from, to) = (arrow.to_id.clone(), arrow.from_id.clone());
            out.arrows[*index] = route_arrow(&out, &from, &to);
        }
        SceneEdit::RemoveArrow(index) => {
            if *index >= out.arrows.len() {
                return Err(RenderError::UnknownArrowIndex { index: *index });
            }
            out.arrows.remove(*index);
        }
    }
    update_canvas(&mut out);
    Ok(out)
}

/// Read the structural graph back out of a scene: shapes become nodes in
/// shape order, arrows become edges in arrow order.
pub fn scene_to_graph(scene: &SceneGraph) -> DiagramGraph {
    let nodes = scene
        .shapes
        .iter()
        .map(|s| Node { id: s.node_id.clone(), label: s.label.clone(), kind: s.form.kind() })
        .collect();
    let edges = scene.arrows.iter().map(|a| Edge::new(a.from_id.clone(), a.to_id.clone())).collect();
    DiagramGraph::new(nodes, edges, scene.direction)
}

/// Scene invariant check used by tests and generation-time assertions.
pub fn scene_violations(scene: &SceneGraph) -> Vec<String> {
    let mut out = Vec::new();
    for (i, a) in scene.shapes.iter().enumerate() {
        if a.size.0 < shape_width(&a.label) - 1e-9 || a.size.1 < SHAPE_HEIGHT - 1e-9 {
            out.push(format!("shape {} too small for its label", a.node_id));
        }
        for b in scene.shapes.iter().skip(i + 1) {
            if a.node_id == b.node_id {
                out.push(format!("duplicate shape id {}", a.node_id));
            }
            if !separation_ok(a, b) {
                out.push(format!("shapes {} and {} violate the margin", a.node_id, b.node_id));
            }
        }
    }
    for (i, arrow) in scene.arrows.iter().enumerate() {
        for id in [&arrow.from_id, &arrow.to_id] {
            if shape_of(scene, id).is_none() {
                out.push(format!("arrow #{i} references unknown shape {id}"));
            }
        }
        if arrow.waypoints.len() < 2 {
            out.push(format!("arrow #{i} has fewer than 2 waypoints"));
        }
    }
    out
}

/// Format a coordinate with at most two decimal places, trimming trailing
/// zeros so output bytes are stable and compact.
fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.2}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

fn xml_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Serialize the scene as a standalone SVG 1.1 document. Byte-identical for
/// identical scenes: shapes sorted by node id, then arrows in arrow order.
pub fn to_svg(scene: &SceneGraph) -> String {
    let (min_x, min_y, _, _) = shape_bounds(&scene.shapes);
    let origin = (min_x - MARGIN, min_y - MARGIN);
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"{ox} {oy} {w} {h}\">\n",
        w = fmt_num(scene.canvas.0),
        h = fmt_num(scene.canvas.1),
        ox = fmt_num(origin.0),
        oy = fmt_num(origin.1),
    );
    svg.push_str(
        "<defs>\n<marker id=\"arrowhead\" markerWidth=\"10\" markerHeight=\"8\" refX=\"9\" refY=\"4\" orient=\"auto\" markerUnits=\"userSpaceOnUse\">\n<polygon points=\"0 0, 10 4, 0 8\" fill=\"#333333\"/>\n</marker>\n</defs>\n",
    );

    let mut order: Vec<&PlacedShape> = scene.shapes.iter().collect();
    order.sort_by_key(|s| node_id_index(&s.node_id).unwrap_or(u64::MAX));
    for shape in order {
        let (cx, cy) = shape.center;
        let (hw, hh) = shape.half();
        match shape.form {
            ShapeForm::Rectangle => {
                let _ = writeln!(
                    svg,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" rx=\"3\" fill=\"#ffffff\" stroke=\"#333333\" stroke-width=\"1.5\"/>",
                    fmt_num(cx - hw),
                    fmt_num(cy - hh),
                    fmt_num(shape.size.0),
                    fmt_num(shape.size.1),
                );
            }
            ShapeForm::Diamond => {
                let _ = writeln!(
                    svg,
                    "<polygon points=\"{},{} {},{} {},{} {},{}\" fill=\"#ffffff\" stroke=\"#333333\" stroke-width=\"1.5\"/>",
                    fmt_num(cx),
                    fmt_num(cy - hh),
                    fmt_num(cx + hw),
                    fmt_num(cy),
                    fmt_num(cx),
                    fmt_num(cy + hh),
                    fmt_num(cx - hw),
                    fmt_num(cy),
                );
            }
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"14\">{}</text>",
            fmt_num(cx),
            fmt_num(cy + 5.0),
            xml_escape(&shape.label),
        );
    }

    for arrow in &scene.arrows {
        let mut d = String::new();
        for (i, (x, y)) in arrow.waypoints.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, fmt_num(*x), fmt_num(*y));
        }
        let _ = writeln!(
            svg,
            "<path class=\"arrow\" d=\"{d}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1.5\" marker-end=\"url(#arrowhead)\"/>",
        );
    }
    svg.push_str("</svg>\n");
    svg
}
