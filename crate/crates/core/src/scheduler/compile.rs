use std::collections::HashMap;

use crate::cenn::{NonlinearD, Template};
use crate::error::{Error, Result};
use crate::grid::{Region, Shape};
use crate::netspec::{ConvWeights, Layer, LayerKind, LayerOp, NetworkSpec, PoolKind, ReluKind};
use crate::templates::{self, DownsampleMode, Step, TemplateProgram};

use super::{
    AccSource, CeNNProgram, EventKind, HardwareConfig, LayerInfo, MemRef, Readout, SramWord, StoredTemplate, TemplateId, TraceEvent, WriteSource,
};

/// Lowers `net` onto `hw`.
///
/// Conv layers follow the grouped partial-sum loop: for each output map, input
/// maps are convolved N at a time on the N arrays, the group results are summed
/// into array 0 and chained through a partial-sum buffer. When the layer reads
/// the network input, the input is written into every array so several outputs
/// share one phase. ReLU and pooling layers run their template program
/// template-major: each template is fetched from SRAM once and applied to all
/// map groups before the next.
pub fn compile(net: &NetworkSpec, hw: &HardwareConfig) -> Result<CeNNProgram> {
    hw.validate()?;
    let mut b = Builder::new(hw);
    let fc_free = !net.has_fc();
    let mut maps: Vec<MapLoc>;
    let first = &net.layers[0];
    let broadcast = first.kind() == LayerKind::Conv && first.in_maps <= hw.n_arrays;
    let mut input_writes = Vec::new();
    if broadcast {
        let per_phase = (hw.n_arrays / first.in_maps).min(first.out_maps).max(1);
        maps = Vec::new();
        for ch in 0..net.input_maps {
            let mut copies = Vec::new();
            for p in 0..per_phase {
                let mem = b.alloc(p * first.in_maps + ch)?;
                input_writes.push(EventKind::MemWrite {
                    mem,
                    src: WriteSource::Input(ch),
                    region: Region::full(net.input_shape),
                    downsample: None,
                });
                copies.push(mem);
            }
            maps.push(MapLoc { copies });
        }
    } else {
        b.layer = 0;
        b.new_phase();
        maps = Vec::new();
        for ch in 0..net.input_maps {
            let mem = b.alloc(ch % hw.n_arrays)?;
            b.emit(EventKind::MemWrite {
                mem,
                src: WriteSource::Input(ch),
                region: Region::full(net.input_shape),
                downsample: None,
            });
            maps.push(MapLoc { copies: vec![mem] });
        }
    }
    let last = net.layers.len() - 1;
    for (li, layer) in net.layers.iter().enumerate() {
        b.layer = li;
        b.layers.push(LayerInfo {
            name: layer.name.clone(),
            kind: Some(layer.kind()),
            in_maps: layer.in_maps,
            out_maps: layer.out_maps,
            in_shape: layer.in_shape,
            out_shape: layer.out_shape,
            outputs: Vec::new(),
        });
        maps = match &layer.op {
            LayerOp::Conv(w) => {
                let fused = fc_free && li == last;
                let writes = std::mem::take(&mut input_writes);
                b.conv(layer, w, &maps, li == 0 && broadcast, fused, writes)?
            }
            LayerOp::Relu(kind) => {
                let prog = match kind {
                    ReluKind::Linear => templates::relu_program(),
                    ReluKind::Nonlinear => templates::nonlinear_relu_program(),
                };
                b.program(layer, &prog, &maps)?
            }
            LayerOp::Pool {
                kind,
                window,
                neighborhood,
                downsample,
                t_max,
            } => {
                let prog = match kind {
                    PoolKind::MaxLinear => templates::maxpool_program_with(*neighborhood, *downsample),
                    PoolKind::Avg => templates::avgpool_program(*window, *downsample),
                    PoolKind::Nonlinear => templates::nonlinear_pool_program(*t_max, *downsample)?,
                };
                b.program(layer, &prog, &maps)?
            }
            LayerOp::Fc(_) => {
                b.fc(layer, li, &maps);
                Vec::new()
            }
        };
        b.layers[li].outputs = maps.iter().map(|m| m.copies[0]).collect();
    }
    if fc_free {
        let l = &net.layers[last];
        b.layers.push(LayerInfo {
            name: "readout".into(),
            kind: None,
            in_maps: l.out_maps,
            out_maps: l.out_maps,
            in_shape: l.out_shape,
            out_shape: Shape::new(1, 1),
            outputs: Vec::new(),
        });
        b.layer = b.layers.len() - 1;
        b.new_phase();
        b.emit(EventKind::AdcConvert {
            maps: maps.iter().map(|m| m.copies[0]).collect(),
            readout: Readout::Center,
            count: maps.len(),
        });
    }
    b.finish(net)
}

/// Buffers holding one map; more than one when the map is broadcast.
#[derive(Debug, Clone)]
struct MapLoc {
    copies: Vec<MemRef>,
}

impl MapLoc {
    fn on(&self, array: usize) -> MemRef {
        *self.copies.iter().find(|m| m.array == array).unwrap_or(&self.copies[0])
    }
}

#[derive(Default)]
struct SlotPool {
    free: Vec<usize>,
    next: usize,
    live: usize,
    peak: usize,
}

struct Builder<'a> {
    hw: &'a HardwareConfig,
    templates: Vec<StoredTemplate>,
    index: HashMap<Vec<u64>, TemplateId>,
    events: Vec<TraceEvent>,
    layers: Vec<LayerInfo>,
    phase: usize,
    phase_used: bool,
    layer: usize,
    pools: Vec<SlotPool>,
    tiles_per_map: usize,
}

struct Tile {
    out: Region,
    read: Region,
}

impl<'a> Builder<'a> {
    fn new(hw: &'a HardwareConfig) -> Self {
        Self {
            hw,
            templates: Vec::new(),
            index: HashMap::new(),
            events: Vec::new(),
            layers: Vec::new(),
            phase: 0,
            phase_used: false,
            layer: 0,
            pools: (0..hw.n_arrays).map(|_| SlotPool::default()).collect(),
            tiles_per_map: 1,
        }
    }

    fn new_phase(&mut self) {
        if self.phase_used {
            self.phase += 1;
            self.phase_used = false;
        }
    }

    fn emit(&mut self, kind: EventKind) {
        self.phase_used = true;
        self.events.push(TraceEvent {
            phase: self.phase,
            layer: self.layer,
            kind,
        });
    }

    fn alloc(&mut self, array: usize) -> Result<MemRef> {
        let pool = &mut self.pools[array];
        let slot = match pool.free.pop() {
            Some(s) => s,
            None => {
                pool.next += 1;
                pool.next - 1
            }
        };
        pool.live += 1;
        pool.peak = pool.peak.max(pool.live);
        Ok(MemRef { array, slot })
    }

    fn release(&mut self, m: MemRef) {
        let pool = &mut self.pools[m.array];
        pool.live -= 1;
        pool.free.push(m.slot);
        // lowest slot first keeps traces stable
        pool.free.sort_unstable_by(|a, b| b.cmp(a));
    }

    fn template(&mut self, template: Template, t_max: Option<f64>) -> TemplateId {
        let mut key: Vec<u64> = template.a.iter().chain(template.b.iter()).flatten().map(|v| v.to_bits()).collect();
        key.push(template.z.to_bits());
        match template.d {
            NonlinearD::None => key.push(0),
            NonlinearD::ReluLike => key.push(1),
            NonlinearD::GlobmaxLike { slope } => key.extend([2, slope.to_bits()]),
        }
        key.push(t_max.map_or(u64::MAX, f64::to_bits));
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = TemplateId(self.templates.len());
        self.templates.push(StoredTemplate { template, t_max });
        self.index.insert(key, id);
        id
    }

    fn tiles(&mut self, shape: Shape, layer: &Layer) -> Result<Vec<Tile>> {
        let a = self.hw.array_shape;
        if shape.fits_in(a) {
            return Ok(vec![Tile {
                out: Region::full(shape),
                read: Region::full(shape),
            }]);
        }
        if !self.hw.allow_tiling {
            return Err(Error::Layer {
                layer: layer.name.clone(),
                message: format!("{shape} maps exceed the {a} array and tiling is disabled"),
            });
        }
        // one halo cell on each side; even tiles keep 2x2 groups whole
        let even = |n: usize| if n >= 4 { (n - 2) & !1 } else { 0 };
        let tile = Shape::new(even(a.rows), even(a.cols));
        if tile.cells() == 0 {
            return Err(Error::Domain(format!("array {a} is too small to tile with a halo")));
        }
        let out: Vec<Tile> = Region::tiles(shape, tile)
            .into_iter()
            .map(|r| {
                let row = r.row.saturating_sub(1);
                let col = r.col.saturating_sub(1);
                let end_r = (r.row + r.rows + 1).min(shape.rows);
                let end_c = (r.col + r.cols + 1).min(shape.cols);
                Tile {
                    out: r,
                    read: Region {
                        row,
                        col,
                        rows: end_r - row,
                        cols: end_c - col,
                    },
                }
            })
            .collect();
        self.tiles_per_map = self.tiles_per_map.max(out.len());
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, layer: &Layer, w: &ConvWeights, ins: &[MapLoc], broadcast: bool, fused: bool, mut input_writes: Vec<EventKind>) -> Result<Vec<MapLoc>> {
        let n = self.hw.n_arrays;
        let c_in = layer.in_maps;
        let c_out = layer.out_maps;
        let tiles = self.tiles(layer.in_shape, layer)?;
        let kernel = |b: &mut Self, i: usize, j: usize| {
            let z = if j == 0 { w.bias[i] } else { 0.0 };
            let t = Template::feedforward(w.kernels[i][j], z).map_err(|e| Error::Layer {
                layer: layer.name.clone(),
                message: e.to_string(),
            })?;
            Ok::<_, Error>(b.template(t, None))
        };
        let mut outs: Vec<MapLoc> = Vec::with_capacity(c_out);
        if broadcast {
            let per_phase = (n / c_in).min(c_out).max(1);
            let mut first = 0;
            while first < c_out {
                let batch: Vec<usize> = (first..(first + per_phase).min(c_out)).collect();
                let dests: Vec<MemRef> = batch.iter().map(|&i| self.alloc(i % n)).collect::<Result<_>>()?;
                for t in &tiles {
                    self.new_phase();
                    for ev in input_writes.drain(..) {
                        self.emit(ev);
                    }
                    for &i in &batch {
                        for j in 0..c_in {
                            let id = kernel(self, i, j)?;
                            self.emit(EventKind::SramRead { word: SramWord::Template(id) });
                        }
                    }
                    for (p, &i) in batch.iter().enumerate() {
                        for (j, input) in ins.iter().enumerate().take(c_in) {
                            let a = p * c_in + j;
                            let id = kernel(self, i, j)?;
                            self.emit(EventKind::MemRead {
                                array: a,
                                mem: input.on(a),
                                region: t.read,
                            });
                            self.emit(EventKind::TemplateApply {
                                array: a,
                                template: id,
                                region: t.out,
                            });
                        }
                    }
                    let combine = c_in > 1 && !fused;
                    if combine {
                        self.new_phase();
                        self.emit(EventKind::SramRead {
                            word: SramWord::AccumulateConfig,
                        });
                    }
                    for (p, _) in batch.iter().enumerate() {
                        let base = p * c_in;
                        for j in 1..c_in {
                            self.emit(EventKind::Accumulate {
                                array: base,
                                src: AccSource::Array(base + j),
                                region: t.out,
                            });
                        }
                        self.emit(EventKind::MemWrite {
                            mem: dests[p],
                            src: WriteSource::Array(base),
                            region: t.out,
                            downsample: None,
                        });
                    }
                }
                outs.extend(dests.into_iter().map(|m| MapLoc { copies: vec![m] }));
                first += per_phase;
            }
        } else {
            let groups = c_in.div_ceil(n);
            for i in 0..c_out {
                let dest = self.alloc(i % n)?;
                let psum = if groups > 1 { Some(self.alloc(0)?) } else { None };
                for q in 0..groups {
                    let js: Vec<usize> = (q * n..((q + 1) * n).min(c_in)).collect();
                    let write_to = if q + 1 == groups { dest } else { psum.expect("several groups") };
                    let needs_combine = js.len() > 1 || q > 0;
                    for t in &tiles {
                        self.new_phase();
                        for ev in input_writes.drain(..) {
                            self.emit(ev);
                        }
                        let ids: Vec<TemplateId> = js.iter().map(|&j| kernel(self, i, j)).collect::<Result<_>>()?;
                        for &id in &ids {
                            self.emit(EventKind::SramRead { word: SramWord::Template(id) });
                        }
                        for (a, (&j, &id)) in js.iter().zip(&ids).enumerate() {
                            self.emit(EventKind::MemRead {
                                array: a,
                                mem: ins[j].on(a),
                                region: t.read,
                            });
                            self.emit(EventKind::TemplateApply {
                                array: a,
                                template: id,
                                region: t.out,
                            });
                        }
                        if needs_combine && !fused {
                            self.new_phase();
                            self.emit(EventKind::SramRead {
                                word: SramWord::AccumulateConfig,
                            });
                        }
                        for a in 1..js.len() {
                            self.emit(EventKind::Accumulate {
                                array: 0,
                                src: AccSource::Array(a),
                                region: t.out,
                            });
                        }
                        if q > 0 {
                            self.emit(EventKind::Accumulate {
                                array: 0,
                                src: AccSource::Mem(psum.expect("several groups")),
                                region: t.out,
                            });
                        }
                        self.emit(EventKind::MemWrite {
                            mem: write_to,
                            src: WriteSource::Array(0),
                            region: t.out,
                            downsample: None,
                        });
                    }
                }
                if let Some(p) = psum {
                    self.release(p);
                }
                outs.push(MapLoc { copies: vec![dest] });
            }
        }
        for m in ins {
            for &c in &m.copies {
                self.release(c);
            }
        }
        Ok(outs)
    }

    /// Lowers a single-map template program applied to every map.
    fn program(&mut self, layer: &Layer, prog: &TemplateProgram, ins: &[MapLoc]) -> Result<Vec<MapLoc>> {
        let n = self.hw.n_arrays;
        let tiles = self.tiles(layer.in_shape, layer)?;
        let steps = prog.steps();
        // a downsample folds into the write of the compute step before it
        let mut ds_after: Vec<Option<DownsampleMode>> = vec![None; steps.len()];
        let mut last_compute = None;
        for (si, s) in steps.iter().enumerate() {
            match s {
                Step::ApplyTemplate { .. } | Step::AddFromMem(_) => last_compute = Some(si),
                Step::Downsample2x2(mode) => {
                    let c = last_compute.ok_or_else(|| Error::Program("downsample before any compute step".into()))?;
                    if steps[c + 1..si].iter().any(|s| matches!(s, Step::StoreToMem(_) | Step::LoadToInput(_))) {
                        return Err(Error::Program("downsample must directly follow a compute step".into()));
                    }
                    ds_after[c] = Some(*mode);
                }
                _ => {}
            }
        }
        let mut st: Vec<MapState> = ins
            .iter()
            .map(|m| MapState {
                cur: m.copies[0],
                alias: HashMap::new(),
            })
            .collect();
        for m in ins {
            for &c in &m.copies[1..] {
                self.release(c);
            }
        }
        let maps = st.len();
        let mut in_shape = layer.in_shape;
        for (si, step) in steps.iter().enumerate() {
            match step {
                Step::StoreToMem(k) => {
                    for s in st.iter_mut() {
                        if let Some(old) = s.alias.insert(*k, s.cur) {
                            if !s.references(old) {
                                self.release(old);
                            }
                        }
                    }
                }
                Step::LoadToInput(k) => {
                    for s in st.iter_mut() {
                        let old = s.cur;
                        s.cur = s.alias[k];
                        if !s.references(old) {
                            self.release(old);
                        }
                    }
                }
                Step::Downsample2x2(_) | Step::WriteBack => {}
                Step::ApplyTemplate { template, t_max } => {
                    if template.d != NonlinearD::None && tiles.len() > 1 {
                        return Err(Error::Layer {
                            layer: layer.name.clone(),
                            message: "nonlinear templates need the whole map on one array; tiling is not possible".into(),
                        });
                    }
                    let id = self.template(template.clone(), *t_max);
                    self.lower_step(&mut st, &tiles, SramWord::Template(id), None, ds_after[si], n, maps)?;
                }
                Step::AddFromMem(k) => {
                    self.lower_step(&mut st, &tiles, SramWord::AccumulateConfig, Some(*k), ds_after[si], n, maps)?;
                }
            }
            if let Some(mode) = ds_after[si] {
                in_shape = mode.output_shape(in_shape)?;
            }
        }
        debug_assert_eq!(in_shape, layer.out_shape);
        let mut outs = Vec::with_capacity(maps);
        for s in st {
            let mut extra: Vec<MemRef> = s.alias.values().copied().filter(|&m| m != s.cur).collect();
            extra.sort_unstable();
            extra.dedup();
            for m in extra {
                self.release(m);
            }
            outs.push(MapLoc { copies: vec![s.cur] });
        }
        Ok(outs)
    }

    /// One compute step of an elementwise program over every map group.
    #[allow(clippy::too_many_arguments)]
    fn lower_step(
        &mut self,
        st: &mut [MapState],
        tiles: &[Tile],
        word: SramWord,
        add_slot: Option<usize>,
        downsample: Option<DownsampleMode>,
        n: usize,
        maps: usize,
    ) -> Result<()> {
        let groups = maps.div_ceil(n);
        for g in 0..groups {
            let members: Vec<usize> = (g * n..((g + 1) * n).min(maps)).collect();
            let dests: Vec<MemRef> = members.iter().map(|&m| self.alloc(st[m].cur.array)).collect::<Result<_>>()?;
            for (ti, t) in tiles.iter().enumerate() {
                self.new_phase();
                if g == 0 && ti == 0 {
                    self.emit(EventKind::SramRead { word });
                }
                for (&m, &dest) in members.iter().zip(&dests) {
                    let array = st[m].cur.array;
                    self.emit(EventKind::MemRead {
                        array,
                        mem: st[m].cur,
                        region: t.read,
                    });
                    match (word, add_slot) {
                        (SramWord::Template(id), _) => self.emit(EventKind::TemplateApply {
                            array,
                            template: id,
                            region: t.out,
                        }),
                        (SramWord::AccumulateConfig, Some(k)) => {
                            let src = *st[m]
                                .alias
                                .get(&k)
                                .ok_or_else(|| Error::Program(format!("slot {k} read before it is stored")))?;
                            self.emit(EventKind::Accumulate {
                                array,
                                src: AccSource::Mem(src),
                                region: t.out,
                            })
                        }
                        (SramWord::AccumulateConfig, None) => unreachable!("accumulate needs a slot"),
                    }
                    self.emit(EventKind::MemWrite {
                        mem: dest,
                        src: WriteSource::Array(array),
                        region: t.out,
                        downsample,
                    });
                }
            }
            for (&m, &dest) in members.iter().zip(&dests) {
                let s = &mut st[m];
                let old = s.cur;
                s.cur = dest;
                if !s.references(old) {
                    self.release(old);
                }
            }
        }
        Ok(())
    }

    fn fc(&mut self, layer: &Layer, li: usize, ins: &[MapLoc]) {
        self.new_phase();
        self.emit(EventKind::AdcConvert {
            maps: ins.iter().map(|m| m.copies[0]).collect(),
            readout: Readout::Full,
            count: layer.in_maps * layer.in_shape.cells(),
        });
        self.new_phase();
        let ops = (layer.fc_inputs() * layer.out_maps) as u64;
        self.emit(EventKind::DigitalFc {
            layer: li,
            mults: ops,
            adds: ops,
        });
        for m in ins {
            for &c in &m.copies {
                self.release(c);
            }
        }
    }

    fn finish(self, net: &NetworkSpec) -> Result<CeNNProgram> {
        let tiles = self.tiles_per_map;
        let (array, peak) = self
            .pools
            .iter()
            .enumerate()
            .map(|(a, p)| (a, p.peak))
            .max_by_key(|&(a, p)| (p, std::cmp::Reverse(a)))
            .expect("at least one array");
        let required = peak * tiles;
        if required > self.hw.mem_slots_per_cell {
            return Err(Error::MemoryOverflow {
                array,
                required,
                available: self.hw.mem_slots_per_cell,
            });
        }
        let phases = self.events.last().map_or(0, |e| e.phase + 1);
        let prog = CeNNProgram {
            network: net.name.clone(),
            hw: *self.hw,
            templates: self.templates,
            events: self.events,
            layers: self.layers,
            phases,
            slots_required: required,
        };
        prog.validate()?;
        Ok(prog)
    }
}

struct MapState {
    cur: MemRef,
    alias: HashMap<usize, MemRef>,
}

impl MapState {
    fn references(&self, m: MemRef) -> bool {
        self.cur == m || self.alias.values().any(|&v| v == m)
    }
}
