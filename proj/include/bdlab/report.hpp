#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bdlab/pipeline.hpp"

namespace bdlab {

struct RenderedReport {
    std::vector<std::filesystem::path> files;
};

// Renders report.md plus CSV exports from a results ledger; emits SVG sweep
// charts when the ledger holds >= 2 poison rates. Pure function of the ledger
// contents (and the config sidecars next to it, when present): regenerating
// from the same ledger is byte-identical.
RenderedReport render_report(const std::filesystem::path& ledger_path,
                             const std::filesystem::path& out_dir);

}  // namespace bdlab
