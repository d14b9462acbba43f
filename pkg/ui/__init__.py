# 命令行与绘图
