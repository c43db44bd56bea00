//! Gate-count area/power proxy for multiply-accumulate units.
//!
//! Costs count equivalent 2-input simple gates. The primitive and component
//! costs are table-driven; a MAC unit is composed from them as follows.
//!
//! Common to every design:
//!   * unsigned multiplier array over the significands (partial-product bits
//!     plus reduction), with the product sign from one XOR;
//!   * for floating-point inputs, an exponent adder and an implicit-bit
//!     detector (OR tree over each operand's exponent field);
//!   * a product pipe-stage register holding sign, exponent sum and
//!     significand product (integer inputs feeding a fixed accumulator skip
//!     this stage and the aligner entirely).
//!
//! Fixed-point (Kulisch) accumulation:
//!   * a widening left shifter that places the significand product anywhere
//!     in the fixed grid spanned by the product exponent range;
//!   * the accumulator adder and register at `product width + 12` bits,
//!     sized so 4096 worst-case products cannot overflow.
//!
//! Floating-point accumulation (serial, smallest-gate-count choices):
//!   * exponent difference, larger-exponent select, operand swap muxes, an
//!     aligning right shifter with a sticky-bit OR tree;
//!   * conditional-invert XOR row plus the significand adder (3 guard bits);
//!   * a serial leading-zero detector, normalizing left shifter, exponent
//!     adjust adder, round-to-nearest-even increment with its decision
//!     gates and the post-round exponent increment;
//!   * the accumulator register at the accumulator word width.

use std::fmt;

use thiserror::Error;

use crate::codec::Format;

/// Extra accumulator bits beyond the product width ("FX+12"): room for 4096
/// extreme products without overflow.
pub const FIXED_ACC_MARGIN: u32 = 12;

/// Guard bits carried through the floating-point accumulation adder.
const FLOAT_ACC_GUARD_BITS: u32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GateCostError {
    #[error("component width must be at least {min}, got {got}")]
    WidthTooSmall { min: u32, got: u32 },
}

/// Primitive cells, costed as the sum of (fan-in − 1) over internal simple
/// gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatePrimitive {
    And2,
    Or2,
    Aoi21,
    Oai21,
    Mux2,
    Xor2,
    HalfAdder,
    FullAdder,
    FlipFlop,
}

impl GatePrimitive {
    pub const fn cost(self) -> u64 {
        match self {
            GatePrimitive::And2 | GatePrimitive::Or2 => 1,
            GatePrimitive::Aoi21 | GatePrimitive::Oai21 => 2,
            GatePrimitive::Mux2 | GatePrimitive::Xor2 | GatePrimitive::HalfAdder => 3,
            // FA = 2·HA + OR2, FF (non-scan) = 2·MUX2
            GatePrimitive::FullAdder => 7,
            GatePrimitive::FlipFlop => 6,
        }
    }
}

const AND2: u64 = GatePrimitive::And2.cost();
const OR2: u64 = GatePrimitive::Or2.cost();
const AOI21: u64 = GatePrimitive::Aoi21.cost();
const MUX2: u64 = GatePrimitive::Mux2.cost();
const XOR2: u64 = GatePrimitive::Xor2.cost();
const HA: u64 = GatePrimitive::HalfAdder.cost();
const FA: u64 = GatePrimitive::FullAdder.cost();
const FF: u64 = GatePrimitive::FlipFlop.cost();

/// Datapath building blocks with closed-form gate counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// N-bit ripple adder.
    Add { width: u32 },
    /// N-bit incrementer.
    Increment { width: u32 },
    /// N×N partial-product bit matrix.
    PartialProductBits { width: u32 },
    /// N×N partial-product reduction to a carry-save pair.
    PartialProductReduce { width: u32 },
    /// N-bit left shifter by 0..=k.
    ShiftLeft { width: u32, max_shift: u32 },
    /// N-bit arithmetic right shifter by 0..=k.
    ShiftRightSigned { width: u32, max_shift: u32 },
    /// N-bit widening left shifter by 0..=k (output N+k bits).
    ShiftLeftWiden { width: u32, max_shift: u32 },
    /// N-bit register.
    Register { width: u32 },
}

/// Gate count of one datapath component.
pub fn component_cost(component: Component) -> Result<u64, GateCostError> {
    fn need(width: u32, min: u32) -> Result<u64, GateCostError> {
        if width < min {
            Err(GateCostError::WidthTooSmall { min, got: width })
        } else {
            Ok(width as u64)
        }
    }
    // mux depth of a 0..=k shifter
    fn stages(max_shift: u32) -> u64 {
        if max_shift == 0 {
            0
        } else {
            (u32::BITS - max_shift.leading_zeros()) as u64
        }
    }
    match component {
        Component::Add { width } => {
            let n = need(width, 1)?;
            Ok((n - 1) * FA + HA)
        }
        Component::Increment { width } => Ok(need(width, 1)? * HA),
        Component::PartialProductBits { width } => {
            let n = need(width, 1)?;
            Ok(n * n * AND2)
        }
        Component::PartialProductReduce { width } => {
            let n = need(width, 1)?;
            Ok((n - 1) * (n - 1) * FA + (n - 1) * HA)
        }
        Component::ShiftLeft { width, max_shift } => {
            let n = need(width, 1)?;
            let c = n as i64 * stages(max_shift) as i64 * MUX2 as i64
                - max_shift as i64 * (MUX2 as i64 - AND2 as i64);
            debug_assert!(c >= 0);
            Ok(c.max(0) as u64)
        }
        Component::ShiftRightSigned { width, max_shift } => {
            let n = need(width, 1)?;
            Ok((n - 1) * stages(max_shift) * MUX2)
        }
        Component::ShiftLeftWiden { width, max_shift } => {
            let n = need(width, 2)?;
            Ok((n - 2) * stages(max_shift) * MUX2 + max_shift as u64 * (MUX2 + AND2))
        }
        Component::Register { width } => Ok(need(width, 1)? * FF),
    }
}

fn cost(component: Component) -> u64 {
    component_cost(component).expect("static composition widths are valid")
}

/// Accumulator choice for a MAC unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accumulator {
    /// Fixed-point (Kulisch) accumulator. `None` sizes it at product width
    /// plus [`FIXED_ACC_MARGIN`].
    Fixed {
        width: Option<u32>,
    },
    Fp16,
    Fp32,
}

impl Accumulator {
    pub const FX12: Accumulator = Accumulator::Fixed { width: None };
}

impl fmt::Display for Accumulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Accumulator::Fixed { width: None } => write!(f, "fx+12"),
            Accumulator::Fixed { width: Some(w) } => write!(f, "fx{w}"),
            Accumulator::Fp16 => write!(f, "fp16"),
            Accumulator::Fp32 => write!(f, "fp32"),
        }
    }
}

/// A MAC architecture: the input number format and the accumulator kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacSpec {
    pub input: Format,
    pub accumulator: Accumulator,
}

/// Gate-count breakdown of one MAC unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateReport {
    pub multiply: u64,
    pub align: u64,
    pub accumulate: u64,
    pub normalize_round: u64,
    pub registers: u64,
    pub total: u64,
}

// ---- datapath widths per input format ----

/// Unsigned significand width of one operand: stored mantissa plus the
/// implicit bit for normal-capable floats, magnitude bits for integers.
fn significand_width(format: Format) -> u32 {
    match format {
        Format::Fp(fp) => fp.mantissa_bits() + if fp.exponent_bits() >= 1 { 1 } else { 0 },
        Format::Int(int) => int.bits() - 1,
    }
}

/// Span of one operand's effective exponent: 2^E − 2 once subnormals pin the
/// bottom exponent to the first normal one. Zero for integers and for E ≤ 1.
fn exponent_span(format: Format) -> u32 {
    match format {
        Format::Fp(fp) if fp.exponent_bits() >= 1 => (1u32 << fp.exponent_bits()) - 2,
        _ => 0,
    }
}

/// Width of the product exponent field (operand exponent sum).
fn product_exponent_width(format: Format) -> u32 {
    match format {
        Format::Fp(fp) if fp.exponent_bits() >= 1 => fp.exponent_bits() + 1,
        _ => 0,
    }
}

/// Fixed-point width holding any product exactly: significand product plus
/// the doubled exponent span plus a sign bit.
pub fn product_fixed_width(format: Format) -> u32 {
    2 * significand_width(format) + 2 * exponent_span(format) + 1
}

/// Default fixed accumulator width for a format ("FX+12").
pub fn default_fixed_width(format: Format) -> u32 {
    product_fixed_width(format) + FIXED_ACC_MARGIN
}

// ---- composition ----

/// Multiplier logic: significand array, product sign, and for floats the
/// exponent adder and implicit-bit detection.
fn multiplier_cost(format: Format) -> u64 {
    let sw = significand_width(format);
    let array = cost(Component::PartialProductBits { width: sw })
        + cost(Component::PartialProductReduce { width: sw });
    let sign = XOR2;
    let exponent_path = match format {
        Format::Fp(fp) if fp.exponent_bits() >= 1 => {
            let exp_add = cost(Component::Add {
                width: fp.exponent_bits(),
            });
            let implicit_bit_detect = 2 * (fp.exponent_bits() as u64 - 1) * OR2;
            exp_add + implicit_bit_detect
        }
        _ => 0,
    };
    array + sign + exponent_path
}

/// Product pipe-stage register: sign + exponent sum + significand product.
fn product_pipe_cost(format: Format) -> u64 {
    let w = 1 + product_exponent_width(format) + 2 * significand_width(format);
    cost(Component::Register { width: w })
}

fn float_acc_params(acc: Accumulator) -> (u32, u32, u32) {
    // (exponent bits, significand incl. implicit bit, register word)
    match acc {
        Accumulator::Fp16 => (5, 11, 16),
        Accumulator::Fp32 => (8, 24, 32),
        Accumulator::Fixed { .. } => unreachable!("fixed handled separately"),
    }
}

/// Gate-count breakdown for a MAC unit.
pub fn mac_cost(spec: &MacSpec) -> GateReport {
    let format = spec.input;
    let is_float_input = matches!(format, Format::Fp(_));
    let prod_sig = 2 * significand_width(format);

    match spec.accumulator {
        Accumulator::Fixed { width } => {
            let acc_width = width.unwrap_or_else(|| default_fixed_width(format));
            let multiply = multiplier_cost(format);
            // the product must land anywhere in the fixed grid spanned by
            // the doubled exponent range; integers need no alignment
            let align_range = 2 * exponent_span(format);
            let align = if is_float_input && align_range > 0 {
                cost(Component::ShiftLeftWiden {
                    width: prod_sig,
                    max_shift: align_range,
                })
            } else {
                0
            };
            let accumulate = cost(Component::Add { width: acc_width });
            let registers = cost(Component::Register { width: acc_width })
                + if is_float_input {
                    product_pipe_cost(format)
                } else {
                    0
                };
            let total = multiply + align + accumulate + registers;
            GateReport {
                multiply,
                align,
                accumulate,
                normalize_round: 0,
                registers,
                total,
            }
        }
        acc => {
            let (acc_exp, acc_sig, acc_word) = float_acc_params(acc);
            let add_width = prod_sig.max(acc_sig) + FLOAT_ACC_GUARD_BITS;
            let exp_width = product_exponent_width(format).max(acc_exp) + 1;

            let multiply = multiplier_cost(format);

            let exponent_diff = cost(Component::Add { width: exp_width });
            let exponent_select = exp_width as u64 * MUX2;
            let operand_swap = 2 * add_width as u64 * MUX2;
            let align_shift = cost(Component::ShiftRightSigned {
                width: add_width,
                max_shift: add_width,
            });
            let sticky_or_tree = (add_width as u64 - 1) * OR2;
            let align =
                exponent_diff + exponent_select + operand_swap + align_shift + sticky_or_tree;

            let conditional_invert = add_width as u64 * XOR2;
            let significand_add = cost(Component::Add { width: add_width });
            let accumulate = conditional_invert + significand_add;

            // serial leading-zero detect: one AOI cell per adder bit
            let leading_zero_detect = add_width as u64 * AOI21;
            let normalize_shift = cost(Component::ShiftLeft {
                width: add_width,
                max_shift: add_width - 1,
            });
            let exponent_adjust = cost(Component::Add { width: exp_width });
            let round_increment = cost(Component::Increment { width: acc_sig });
            let round_decision = AOI21 + OR2 + AND2;
            let round_exp_overflow = cost(Component::Increment { width: exp_width });
            let normalize_round = leading_zero_detect
                + normalize_shift
                + exponent_adjust
                + round_increment
                + round_decision
                + round_exp_overflow;

            let registers =
                product_pipe_cost(format) + cost(Component::Register { width: acc_word });
            let total = multiply + align + accumulate + normalize_round + registers;
            GateReport {
                multiply,
                align,
                accumulate,
                normalize_round,
                registers,
                total,
            }
        }
    }
}

/// One cell of the format × accumulator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub spec: MacSpec,
    pub report: GateReport,
    /// Total relative to the INT8 + FX+12 baseline.
    pub ratio_vs_int8_fixed: f64,
}

/// Gate reports for {int8, e2..e5} × {FX+12, fp16, fp32}, with totals as a
/// ratio against the INT8 fixed-point baseline. Deterministic.
pub fn report_grid() -> Vec<GridCell> {
    let formats: Vec<Format> = ["int8", "e2", "e3", "e4", "e5"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let accumulators = [Accumulator::FX12, Accumulator::Fp16, Accumulator::Fp32];
    let baseline = mac_cost(&MacSpec {
        input: "int8".parse().unwrap(),
        accumulator: Accumulator::FX12,
    })
    .total as f64;
    let mut cells = Vec::new();
    for &input in &formats {
        for &accumulator in &accumulators {
            let spec = MacSpec { input, accumulator };
            let report = mac_cost(&spec);
            cells.push(GridCell {
                spec,
                report,
                ratio_vs_int8_fixed: report.total as f64 / baseline,
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{FpFormat, IntFormat};

    fn fmt(s: &str) -> Format {
        s.parse().unwrap()
    }

    #[test]
    fn primitive_costs_match_the_table() {
        assert_eq!(GatePrimitive::And2.cost(), 1);
        assert_eq!(GatePrimitive::Or2.cost(), 1);
        assert_eq!(GatePrimitive::Aoi21.cost(), 2);
        assert_eq!(GatePrimitive::Oai21.cost(), 2);
        assert_eq!(GatePrimitive::Mux2.cost(), 3);
        assert_eq!(GatePrimitive::Xor2.cost(), 3);
        assert_eq!(GatePrimitive::HalfAdder.cost(), 3);
        assert_eq!(GatePrimitive::FullAdder.cost(), 2 * 3 + 1);
        assert_eq!(GatePrimitive::FlipFlop.cost(), 2 * 3);
    }

    #[test]
    fn component_closed_forms() {
        assert_eq!(component_cost(Component::Add { width: 8 }).unwrap(), 52);
        assert_eq!(
            component_cost(Component::Increment { width: 1 }).unwrap(),
            3
        );
        assert_eq!(
            component_cost(Component::PartialProductBits { width: 8 }).unwrap(),
            64
        );
        assert_eq!(
            component_cost(Component::PartialProductReduce { width: 8 }).unwrap(),
            364
        );
        // 8-bit << [0,28] widen: ceil(log2 29) = 5 stages
        assert_eq!(
            component_cost(Component::ShiftLeftWiden {
                width: 8,
                max_shift: 28
            })
            .unwrap(),
            (8 - 2) * 5 * 3 + 28 * 4
        );
        assert_eq!(
            component_cost(Component::ShiftRightSigned {
                width: 14,
                max_shift: 14
            })
            .unwrap(),
            13 * 4 * 3
        );
        assert_eq!(
            component_cost(Component::Register { width: 27 }).unwrap(),
            162
        );
        assert!(component_cost(Component::Add { width: 0 }).is_err());
        assert!(component_cost(Component::ShiftLeftWiden {
            width: 1,
            max_shift: 4
        })
        .is_err());
    }

    #[test]
    fn fixed_widths_follow_product_widths() {
        assert_eq!(product_fixed_width(fmt("int8")), 15);
        assert_eq!(default_fixed_width(fmt("int8")), 27);
        assert_eq!(product_fixed_width(fmt("e4")), 37);
        assert_eq!(default_fixed_width(fmt("e4")), 49);
        assert_eq!(product_fixed_width(fmt("e5")), 67);
        // subnormal-only and single-exponent grids collapse to the int8 width
        assert_eq!(
            product_fixed_width(Format::Fp(FpFormat::new(0).unwrap())),
            15
        );
        assert_eq!(
            product_fixed_width(Format::Fp(FpFormat::new(1).unwrap())),
            15
        );
    }

    #[test]
    fn int8_fixed_is_the_cheapest_spec() {
        let base = mac_cost(&MacSpec {
            input: fmt("int8"),
            accumulator: Accumulator::FX12,
        });
        for e in 0..=5 {
            let spec = MacSpec {
                input: Format::Fp(FpFormat::new(e).unwrap()),
                accumulator: Accumulator::FX12,
            };
            assert!(mac_cost(&spec).total >= base.total, "e{e}");
        }
    }

    #[test]
    fn fixed_total_is_nondecreasing_in_exponent_bits() {
        let mut prev = 0;
        for e in 1..=5 {
            let spec = MacSpec {
                input: Format::Fp(FpFormat::new(e).unwrap()),
                accumulator: Accumulator::FX12,
            };
            let total = mac_cost(&spec).total;
            assert!(total >= prev, "e{e}: {total} < {prev}");
            prev = total;
        }
    }

    #[test]
    fn cost_is_nondecreasing_in_accumulator_width() {
        let mut prev = 0;
        for w in [27u32, 30, 40, 49, 64] {
            let spec = MacSpec {
                input: fmt("int8"),
                accumulator: Accumulator::Fixed { width: Some(w) },
            };
            let total = mac_cost(&spec).total;
            assert!(total >= prev);
            prev = total;
        }
    }

    #[test]
    fn report_parts_sum_to_total() {
        for cell in report_grid() {
            let r = cell.report;
            assert_eq!(
                r.total,
                r.multiply + r.align + r.accumulate + r.normalize_round + r.registers
            );
            assert!(r.total > 0);
        }
    }

    #[test]
    fn grid_shape_and_float_column_ordering() {
        let grid = report_grid();
        assert_eq!(grid.len(), 15);
        for row in grid.chunks(3) {
            let (fixed, fp16, fp32) = (&row[0], &row[1], &row[2]);
            assert_eq!(fixed.spec.accumulator, Accumulator::FX12);
            assert!(
                fp32.report.total >= fp16.report.total,
                "{}",
                fp16.spec.input
            );
        }
    }

    #[test]
    fn integer_inputs_skip_pipe_and_alignment() {
        let int8 = mac_cost(&MacSpec {
            input: fmt("int8"),
            accumulator: Accumulator::FX12,
        });
        assert_eq!(int8.align, 0);
        assert_eq!(
            int8.registers,
            component_cost(Component::Register { width: 27 }).unwrap()
        );
        let e4 = mac_cost(&MacSpec {
            input: fmt("e4"),
            accumulator: Accumulator::FX12,
        });
        assert!(e4.align > 0);
    }

    #[test]
    fn int4_and_int16_widths() {
        assert_eq!(product_fixed_width(Format::Int(IntFormat::INT4)), 7);
        assert_eq!(product_fixed_width(Format::Int(IntFormat::INT16)), 31);
    }
}
