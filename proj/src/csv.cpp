#include "chatcad/csv.hpp"

#include "chatcad/types.hpp"

namespace chatcad {

std::vector<std::vector<std::string>> parseCsv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool fieldStarted = false;

    auto endRow = [&] {
        if (fieldStarted || !row.empty()) {
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        fieldStarted = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                fieldStarted = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                fieldStarted = true;
                break;
            case '\r': break;
            case '\n': endRow(); break;
            default:
                field += c;
                fieldStarted = true;
        }
    }
    if (quoted) throw DomainError("unterminated quoted CSV field");
    endRow();
    return rows;
}

}  // namespace chatcad
