//! The reference conversion routines as IR, translated operation for
//! operation from the floating-point compensation so that interpretation is
//! bit-identical to the oracle. Calibration-derived quotients are computed at
//! run time, as the datasheet code does.

use super::{Builder, IrProgram, Reg};
use crate::error::Result;
use crate::oracle::{CalibrationConstants, Quantity};

struct Lower<'a> {
    b: Builder,
    c: &'a CalibrationConstants,
}

impl Lower<'_> {
    fn k(&mut self, v: f64) -> Reg {
        self.b.constant(v)
    }

    fn div_k(&mut self, x: Reg, v: f64) -> Reg {
        let k = self.k(v);
        self.b.div(x, k)
    }

    fn mul_k(&mut self, x: Reg, v: f64) -> Reg {
        let k = self.k(v);
        self.b.mul(x, k)
    }

    /// `param / divisor`, evaluated at run time.
    fn quot(&mut self, param: f64, divisor: f64) -> Reg {
        let p = self.k(param);
        self.div_k(p, divisor)
    }

    /// Returns `(temperature, t_fine)`.
    fn temperature(&mut self, adc: Reg) -> (Reg, Reg) {
        let c = self.c;
        let a = self.div_k(adc, 16384.0);
        let t1 = self.quot(c.par_t1, 1024.0);
        let d1 = self.b.sub(a, t1);
        let t2 = self.k(c.par_t2);
        let var1 = self.b.mul(d1, t2);
        let a2 = self.div_k(adc, 131072.0);
        let t1b = self.quot(c.par_t1, 8192.0);
        let d = self.b.sub(a2, t1b);
        let dd = self.b.mul(d, d);
        let t3 = self.k(c.par_t3);
        let t3s = self.mul_k(t3, 16.0);
        let var2 = self.b.mul(dd, t3s);
        let t_fine = self.b.add(var1, var2);
        let temp = self.div_k(t_fine, 5120.0);
        (temp, t_fine)
    }

    fn pressure(&mut self, adc_p: Reg, t_fine: Reg) -> Reg {
        let c = self.c;
        let half = self.div_k(t_fine, 2.0);
        let k64 = self.k(64000.0);
        let var1 = self.b.sub(half, k64);
        let sq = self.b.mul(var1, var1);
        let p6 = self.quot(c.par_p6, 131072.0);
        let mut var2 = self.b.mul(sq, p6);
        let p5 = self.k(c.par_p5);
        let v1p5 = self.b.mul(var1, p5);
        let v1p5x2 = self.mul_k(v1p5, 2.0);
        var2 = self.b.add(var2, v1p5x2);
        let q = self.div_k(var2, 4.0);
        let p4 = self.k(c.par_p4);
        let p4s = self.mul_k(p4, 65536.0);
        var2 = self.b.add(q, p4s);
        let p3 = self.k(c.par_p3);
        let p3v = self.b.mul(p3, var1);
        let p3vv = self.b.mul(p3v, var1);
        let a = self.div_k(p3vv, 16384.0);
        let p2 = self.k(c.par_p2);
        let p2v = self.b.mul(p2, var1);
        let s = self.b.add(a, p2v);
        let var1 = self.div_k(s, 524288.0);
        let r = self.div_k(var1, 32768.0);
        let one = self.k(1.0);
        let f = self.b.add(one, r);
        let p1 = self.k(c.par_p1);
        let var1 = self.b.mul(f, p1);
        let full = self.k(1048576.0);
        let press = self.b.sub(full, adc_p);
        let v2q = self.div_k(var2, 4096.0);
        let diff = self.b.sub(press, v2q);
        let scaled = self.mul_k(diff, 6250.0);
        let press = self.b.div(scaled, var1);
        let p9 = self.k(c.par_p9);
        let p9p = self.b.mul(p9, press);
        let p9pp = self.b.mul(p9p, press);
        let v1 = self.div_k(p9pp, 2147483648.0);
        let p8 = self.quot(c.par_p8, 32768.0);
        let v2 = self.b.mul(press, p8);
        let s = self.div_k(press, 256.0);
        let s2 = self.b.mul(s, s);
        let s3 = self.b.mul(s2, s);
        let p10 = self.quot(c.par_p10, 131072.0);
        let v3 = self.b.mul(s3, p10);
        let sum = self.b.add(v1, v2);
        let sum = self.b.add(sum, v3);
        let p7 = self.k(c.par_p7);
        let p7s = self.mul_k(p7, 128.0);
        let sum = self.b.add(sum, p7s);
        let corr = self.div_k(sum, 16.0);
        self.b.add(press, corr)
    }

    fn humidity(&mut self, adc_h: Reg, temp: Reg) -> Reg {
        let c = self.c;
        let h1 = self.k(c.par_h1);
        let h1s = self.mul_k(h1, 16.0);
        let h3 = self.quot(c.par_h3, 2.0);
        let h3t = self.b.mul(h3, temp);
        let off = self.b.add(h1s, h3t);
        let var1 = self.b.sub(adc_h, off);
        let h2 = self.quot(c.par_h2, 262144.0);
        let h4 = self.quot(c.par_h4, 16384.0);
        let h4t = self.b.mul(h4, temp);
        let one = self.k(1.0);
        let poly = self.b.add(one, h4t);
        let h5 = self.quot(c.par_h5, 1048576.0);
        let h5t = self.b.mul(h5, temp);
        let h5tt = self.b.mul(h5t, temp);
        let poly = self.b.add(poly, h5tt);
        let gain = self.b.mul(h2, poly);
        let var2 = self.b.mul(var1, gain);
        let var3 = self.quot(c.par_h6, 16384.0);
        let var4 = self.quot(c.par_h7, 2097152.0);
        let v4t = self.b.mul(var4, temp);
        let k = self.b.add(var3, v4t);
        let kv = self.b.mul(k, var2);
        let kvv = self.b.mul(kv, var2);
        let h = self.b.add(var2, kvv);
        self.b.clamp(h, 0.0, 100.0)
    }
}

/// Lowers the reference routine for `quantity`; inputs follow
/// [`Quantity::input_names`].
pub fn lower_reference(quantity: Quantity, calib: &CalibrationConstants) -> Result<IrProgram> {
    let mut l = Lower { b: Builder::new(quantity.input_domains(), 0), c: calib };
    let adc_t = l.b.input(0);
    let (temp, t_fine) = l.temperature(adc_t);
    let out = match quantity {
        Quantity::Temperature => temp,
        Quantity::Pressure => {
            let adc_p = l.b.input(1);
            l.pressure(adc_p, t_fine)
        }
        Quantity::Humidity => {
            let adc_h = l.b.input(1);
            l.humidity(adc_h, temp)
        }
    };
    l.b.finish(out)
}
