// The math-to-code map is a checked artifact: its row-id set must match the
// frozen list below exactly once each, and every identifier named in a Code
// column must exist somewhere in the headers.

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::set<std::string> kExpectedRows = {
    "lattice-completeness",
    "rn-module-axioms",
    "pointwise-module-norm",
    "conditional-p-norms",
    "probabilistic-topology",
    "locally-solid-topology",
    "countable-concatenation",
    "concatenation-uniqueness",
    "closure-coincidence",
    "sup-witness",
    "lipschitz-implies-stable",
    "fixed-point-integer-iterate",
    "random-contraction-principle",
    "convex-compactness-definition",
    "convex-compactness-characterization",
    "random-normal-structure",
    "support-localization",
    "random-uniform-convexity",
    "normal-structure-witness",
    "banach-valued-normal-structure",
    "nonexpansive-existence",
    "nonexpansive-existence-uniform",
    "bounded-image-remark",
    "solution-fixed-point-bijection",
    "zero-mean-reduction",
    "forward-solvability",
    "generator-stability-transfer",
    "gluing-identity",
    "conditional-doob",
    "conditional-fubini",
    "conditional-orthogonality",
    "contraction-solvability",
    "integral-driver-solvability",
    "random-iterate-remark",
    "martingale-decomposition",
    "zu-driver-solvability",
    "pointwise-zu-solvability",
    "delayed-measure-solvability",
    "nonexpansive-type-solving",
    "bounded-image-ball",
    "bounded-clamp-example",
    "iterate-nonexpansive-criterion",
    "integral-nonexpansive-corollary",
    "jump-nonexpansive-corollary",
    "concatenation-hull",
    "stable-regular-generators",
    "gluing-solutions",
    "gluing-uniqueness",
    "integrability-remark",
    "intermediate-start",
    "classical-driver-equation",
    "risk-measure-extension",
    "counterexample-family",
    "equation-forms",
};

} // namespace

TEST_CASE("math map rows are complete, unique, and point at real code") {
    const fs::path root = BSELAB_SOURCE_DIR;
    const std::string map_text = slurp(root / "docs" / "math_map.md");

    // collect all header text once
    std::string headers;
    for (const auto& entry : fs::recursive_directory_iterator(root / "include"))
        if (entry.is_regular_file() && entry.path().extension() == ".hpp")
            headers += slurp(entry.path());

    std::map<std::string, int> seen;
    std::istringstream lines(map_text);
    std::string line;
    std::regex row_re(R"(^\|\s*([a-z][a-z0-9-]*)\s*\|(.*)\|(.*)\|(.*)\|\s*$)");
    std::regex code_re("`([A-Za-z_][A-Za-z0-9_:]*)`");
    while (std::getline(lines, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, row_re)) continue;
        const std::string id = m[1];
        if (id == "id") continue; // header row
        ++seen[id];
        const std::string status_cell = m[3];
        for (std::sregex_iterator it(status_cell.begin(), status_cell.end(), code_re), end;
             it != end; ++it) {
            const std::string ident = (*it)[1];
            INFO("identifier " << ident << " from row " << id);
            CHECK(headers.find(ident) != std::string::npos);
        }
    }

    for (const auto& id : kExpectedRows) {
        INFO("row " << id);
        CHECK(seen.count(id) == 1);
        if (seen.count(id)) CHECK(seen[id] == 1);
    }
    for (const auto& [id, count] : seen) {
        INFO("unexpected row " << id);
        CHECK(kExpectedRows.count(id) == 1);
    }
}
