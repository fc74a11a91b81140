#include "noreturn.hpp"

#include <fstream>
#include <sstream>

namespace ehfetch {

namespace {

#include "noreturn_builtin.inc"   // defines kBuiltinNoReturnList

bool is_zero_def(const Instruction& ins) {
    if (ins.zeroing_idiom) return true;
    if (ins.op == Op::mov && ins.operands.size() == 2 && ins.operands[0].type == Operand::Type::reg &&
        ins.operands[0].size >= 4 && ins.operands[1].type == Operand::Type::imm)
        return ins.operands[1].imm == 0;
    return false;
}

}  // namespace

NoReturnDb NoReturnDb::parse(std::string_view text) {
    NoReturnDb db;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        db.add(line.substr(b, e - b + 1));
    }
    return db;
}

NoReturnDb NoReturnDb::builtin() {
    static const NoReturnDb db = parse(kBuiltinNoReturnList);
    return db;
}

void NoReturnDb::extend_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::io, "cannot read noreturn list " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    for (const auto& n : parse(ss.str()).names_) add(n);
}

void NoReturnDb::add(std::string name) {
    if (is_conditional(name)) return;
    names_.insert(std::move(name));
}

bool NoReturnDb::is_noreturn(std::string_view name) const { return names_.find(name) != names_.end(); }

bool NoReturnDb::is_conditional(std::string_view name) const { return name == "error" || name == "error_at_line"; }

ReturnStatus check_error_arg(const InsnGraph& g, Addr call_site) {
    auto rd = reaching_definitions(g, call_site, reg::rdi);
    if (rd.escapes || rd.defs.empty()) return ReturnStatus::noreturn;
    for (const Instruction* d : rd.defs)
        if (!is_zero_def(*d)) return ReturnStatus::noreturn;
    return ReturnStatus::returns;
}

}  // namespace ehfetch
