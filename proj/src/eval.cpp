#include "found/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "found/errors.hpp"
#include "found/image_io.hpp"

namespace found::eval {

DisruptionMask compute_mask(const Tensor& x, const Tensor& fake_clean, double threshold) {
    if (!x.same_shape(fake_clean))
        throw ShapeError("compute_mask: " + x.shape_str() + " vs " + fake_clean.shape_str());
    DisruptionMask out;
    out.threshold = threshold;
    out.mask = Tensor(x.b, 1, x.h, x.w);
    for (int bi = 0; bi < x.b; ++bi)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                double d = 0.0;
                for (int ci = 0; ci < x.c; ++ci)
                    d += std::fabs(fake_clean.at(bi, ci, y, xx) - x.at(bi, ci, y, xx));
                d /= static_cast<double>(x.c);
                out.mask.at(bi, 0, y, xx) = d > threshold ? 1.0 : 0.0;
            }
    return out;
}

namespace {

L2MaskResult l2_mask_one(const Tensor& mask, const Tensor& fake_clean, const Tensor& fake_adv,
                         int bi) {
    double acc = 0.0;
    long count = 0;
    for (int y = 0; y < mask.h; ++y)
        for (int xx = 0; xx < mask.w; ++xx) {
            if (mask.at(bi, 0, y, xx) == 0.0) continue;
            double d = 0.0;
            for (int ci = 0; ci < fake_clean.c; ++ci) {
                const double e = fake_adv.at(bi, ci, y, xx) - fake_clean.at(bi, ci, y, xx);
                d += e * e;
            }
            acc += d / static_cast<double>(fake_clean.c);
            ++count;
        }
    if (count == 0) return {0.0, true};
    return {acc / static_cast<double>(count), false};
}

}  // namespace

L2MaskResult l2_mask(const Tensor& x, const Tensor& fake_clean, const Tensor& fake_adv,
                     double threshold) {
    if (!fake_clean.same_shape(fake_adv))
        throw ShapeError("l2_mask: " + fake_clean.shape_str() + " vs " + fake_adv.shape_str());
    const DisruptionMask m = compute_mask(x, fake_clean, threshold);
    double acc = 0.0;
    long count = 0;
    for (int bi = 0; bi < x.b; ++bi)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                if (m.mask.at(bi, 0, y, xx) == 0.0) continue;
                double d = 0.0;
                for (int ci = 0; ci < x.c; ++ci) {
                    const double e = fake_adv.at(bi, ci, y, xx) - fake_clean.at(bi, ci, y, xx);
                    d += e * e;
                }
                acc += d / static_cast<double>(x.c);
                ++count;
            }
    if (count == 0) return {0.0, true};
    return {acc / static_cast<double>(count), false};
}

std::vector<L2MaskResult> l2_mask_per_sample(const Tensor& x, const Tensor& fake_clean,
                                             const Tensor& fake_adv, double threshold) {
    if (!fake_clean.same_shape(fake_adv))
        throw ShapeError("l2_mask: " + fake_clean.shape_str() + " vs " + fake_adv.shape_str());
    const DisruptionMask m = compute_mask(x, fake_clean, threshold);
    std::vector<L2MaskResult> out;
    out.reserve(x.b);
    for (int bi = 0; bi < x.b; ++bi) out.push_back(l2_mask_one(m.mask, fake_clean, fake_adv, bi));
    return out;
}

double sr_mask(const std::vector<double>& values, double success_threshold) {
    if (values.empty()) throw ConfigError("sr_mask: empty value list");
    long hits = 0;
    for (double v : values)
        if (v > success_threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(values.size());
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("psnr: " + a.shape_str() + " vs " + b.shape_str());
    double mse = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = (a.v[i] - b.v[i]) * 0.5;  // [-1,1] -> [0,1] scale
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::array<double, 11> gaussian_window() {
    std::array<double, 11> w{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

// Valid-region separable Gaussian filtering of one (h, w) plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::array<double, 11>& k) {
    const int fw = w - 10;
    std::vector<double> horiz(static_cast<size_t>(h) * fw);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < fw; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * plane[static_cast<size_t>(y) * w + x + i];
            horiz[static_cast<size_t>(y) * fw + x] = s;
        }
    const int fh = h - 10;
    std::vector<double> out(static_cast<size_t>(fh) * fw);
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * horiz[static_cast<size_t>(y + i) * fw + x];
            out[static_cast<size_t>(y) * fw + x] = s;
        }
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("ssim: " + a.shape_str() + " vs " + b.shape_str());
    if (a.h < 11 || a.w < 11)
        throw ShapeError("ssim: inputs must be at least 11x11, got " + a.shape_str());
    static const std::array<double, 11> window = gaussian_window();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const size_t plane = static_cast<size_t>(a.h) * a.w;
    std::vector<double> pa(plane), pb(plane), paa(plane), pbb(plane), pab(plane);
    double total = 0.0;
    long maps = 0;
    for (int bi = 0; bi < a.b; ++bi)
        for (int ci = 0; ci < a.c; ++ci) {
            const double* ra = a.plane(bi, ci);
            const double* rb = b.plane(bi, ci);
            for (size_t i = 0; i < plane; ++i) {
                const double va = (ra[i] + 1.0) * 0.5;
                const double vb = (rb[i] + 1.0) * 0.5;
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
            const auto mu_a = filter_valid(pa, a.h, a.w, window);
            const auto mu_b = filter_valid(pb, a.h, a.w, window);
            const auto mu_aa = filter_valid(paa, a.h, a.w, window);
            const auto mu_bb = filter_valid(pbb, a.h, a.w, window);
            const auto mu_ab = filter_valid(pab, a.h, a.w, window);
            double acc = 0.0;
            for (size_t i = 0; i < mu_a.size(); ++i) {
                const double va = mu_aa[i] - mu_a[i] * mu_a[i];
                const double vb = mu_bb[i] - mu_b[i] * mu_b[i];
                const double cov = mu_ab[i] - mu_a[i] * mu_b[i];
                const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
                const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
                acc += num / den;
            }
            total += acc / static_cast<double>(mu_a.size());
            ++maps;
        }
    return total / static_cast<double>(maps);
}

// -- report -----------------------------------------------------------------

std::vector<std::string> EvaluationReport::model_names(bool transfer) const {
    std::vector<std::string> names;
    for (const MetricCell& c : cells) {
        if (c.transfer != transfer) continue;
        if (std::find(names.begin(), names.end(), c.model) == names.end())
            names.push_back(c.model);
    }
    return names;
}

MetricCell EvaluationReport::model_average(const std::string& model) const {
    MetricCell avg;
    avg.model = model;
    avg.attribute = "Avg";
    int n = 0;
    for (const MetricCell& c : cells) {
        if (c.model != model) continue;
        avg.transfer = c.transfer;
        avg.cases += c.cases;
        avg.empty_masks += c.empty_masks;
        avg.l2_mask_mean += c.l2_mask_mean;
        avg.sr += c.sr;
        avg.psnr_mean += c.psnr_mean;
        avg.ssim_mean += c.ssim_mean;
        ++n;
    }
    if (n > 0) {
        avg.l2_mask_mean /= n;
        avg.sr /= n;
        avg.psnr_mean /= n;
        avg.ssim_mean /= n;
    }
    return avg;
}

MetricCell EvaluationReport::overall_average() const {
    MetricCell avg;
    avg.model = "Avg";
    avg.attribute = "Avg";
    const auto names = model_names(false);
    for (const std::string& name : names) {
        const MetricCell m = model_average(name);
        avg.l2_mask_mean += m.l2_mask_mean;
        avg.sr += m.sr;
        avg.psnr_mean += m.psnr_mean;
        avg.ssim_mean += m.ssim_mean;
    }
    if (!names.empty()) {
        const double n = static_cast<double>(names.size());
        avg.l2_mask_mean /= n;
        avg.sr /= n;
        avg.psnr_mean /= n;
        avg.ssim_mean /= n;
    }
    return avg;
}

namespace {

MetricCell evaluate_cell(const core::ModelAdapter& adapter, bool transfer, const Tensor& images,
                         const EvalCase& ec, const core::Disruptor& d, int batch_size) {
    MetricCell cell;
    cell.model = adapter.name();
    cell.attribute = ec.attribute_name;
    cell.transfer = transfer;
    std::vector<double> l2_values;
    double psnr_acc = 0.0, ssim_acc = 0.0, l2_acc = 0.0;
    for (int begin = 0; begin < images.b; begin += batch_size) {
        const int count = std::min(batch_size, images.b - begin);
        const Tensor xb = core::slice_batch(images, begin, count);
        const core::AttributeSpec attrs = core::slice_spec(ec.attrs, begin, count);
        const Tensor fake_clean = adapter.full(ad::constant(xb), attrs).value();
        const Tensor adv =
            core::apply_disruptor(core::ImageBatch{xb}, d).data;
        const Tensor fake_adv = adapter.full(ad::constant(adv), attrs).value();
        const auto per_sample = l2_mask_per_sample(xb, fake_clean, fake_adv);
        for (int i = 0; i < count; ++i) {
            const Tensor fc = core::slice_batch(fake_clean, i, 1);
            const Tensor fa = core::slice_batch(fake_adv, i, 1);
            l2_values.push_back(per_sample[i].value);
            if (per_sample[i].mask_empty) ++cell.empty_masks;
            l2_acc += per_sample[i].value;
            psnr_acc += psnr(fc, fa);
            ssim_acc += ssim(fc, fa);
            ++cell.cases;
        }
    }
    cell.sr = sr_mask(l2_values);
    cell.l2_mask_mean = l2_acc / cell.cases;
    cell.psnr_mean = psnr_acc / cell.cases;
    cell.ssim_mean = ssim_acc / cell.cases;
    return cell;
}

}  // namespace

EvaluationReport evaluate(const core::EnsembleHandle& handle, const core::AdapterPtr& held_out,
                          const Tensor& images, const std::vector<EvalCase>& cases,
                          const core::Disruptor& d, int batch_size) {
    if (cases.empty()) throw ConfigError("evaluate: no attribute cases");
    EvaluationReport report;
    for (int i = 0; i < handle.size(); ++i)
        for (const EvalCase& ec : cases)
            report.cells.push_back(
                evaluate_cell(handle.adapter(i), false, images, ec, d, batch_size));
    if (held_out)
        for (const EvalCase& ec : cases)
            report.cells.push_back(evaluate_cell(*held_out, true, images, ec, d, batch_size));
    return report;
}

namespace {

void render_row(std::ostringstream& os, const MetricCell& c) {
    os << "  " << std::left << std::setw(18) << c.model << std::setw(12) << c.attribute
       << std::right << std::fixed << std::setprecision(4) << std::setw(10) << c.l2_mask_mean
       << std::setw(10) << std::setprecision(2) << c.sr * 100.0 << "%" << std::setw(10)
       << std::setprecision(2) << c.psnr_mean << std::setw(10) << std::setprecision(4)
       << c.ssim_mean << "\n";
}

}  // namespace

std::string render_report_text(const EvaluationReport& report) {
    std::ostringstream os;
    os << "disruption report (mask threshold " << report.mask_threshold
       << ", success threshold " << report.success_threshold << ")\n";
    if (!report.config_digest.empty()) os << "config digest:    " << report.config_digest << "\n";
    if (!report.disruptor_digest.empty())
        os << "disruptor digest: " << report.disruptor_digest << "\n";
    for (const bool transfer : {false, true}) {
        const auto names = report.model_names(transfer);
        if (names.empty()) continue;
        os << (transfer ? "\n[transfer: held-out model]\n" : "\n[ensemble models]\n");
        os << "  " << std::left << std::setw(18) << "model" << std::setw(12) << "attribute"
           << std::right << std::setw(10) << "L2mask" << std::setw(11) << "SRmask"
           << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << "\n";
        for (const std::string& name : names) {
            for (const MetricCell& c : report.cells)
                if (c.model == name && c.transfer == transfer) render_row(os, c);
            render_row(os, report.model_average(name));
        }
        if (!transfer) render_row(os, report.overall_average());
    }
    return os.str();
}

void export_grid(const std::vector<GridRow>& rows, const std::string& path) {
    if (rows.empty() || rows[0].cells.empty()) throw ConfigError("export_grid: empty grid");
    const int cell_h = rows[0].cells[0].h;
    const int cell_w = rows[0].cells[0].w;
    const int cols = static_cast<int>(rows[0].cells.size());
    for (const GridRow& r : rows) {
        if (static_cast<int>(r.cells.size()) != cols)
            throw ShapeError("export_grid: ragged rows");
        for (const Tensor& c : r.cells)
            if (c.c != 3 || c.h != cell_h || c.w != cell_w)
                throw ShapeError("export_grid: cell shape mismatch " + c.shape_str());
    }
    constexpr int margin = 2;
    const int n_rows = static_cast<int>(rows.size());
    const int total_h = n_rows * cell_h + (n_rows + 1) * margin;
    const int total_w = cols * cell_w + (cols + 1) * margin;
    Tensor grid = Tensor::full(1, 3, total_h, total_w, 1.0);  // white margins
    for (int r = 0; r < n_rows; ++r)
        for (int cidx = 0; cidx < cols; ++cidx) {
            const Tensor& cell = rows[r].cells[cidx];
            const int y0 = margin + r * (cell_h + margin);
            const int x0 = margin + cidx * (cell_w + margin);
            for (int ci = 0; ci < 3; ++ci)
                for (int y = 0; y < cell_h; ++y)
                    for (int x = 0; x < cell_w; ++x)
                        grid.at(0, ci, y0 + y, x0 + x) = cell.at(0, ci, y, x);
        }
    std::vector<std::string> comments;
    comments.reserve(rows.size());
    for (const GridRow& r : rows) comments.push_back("row: " + r.label);
    imageio::write_ppm(path, grid, comments);
}

}  // namespace found::eval
