# 核心领域类型与基础设施
